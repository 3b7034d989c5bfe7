use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use quadfault::config::{load_config, RunConfig, RESOLVED_CONFIG_FILE};
use quadfault::eval::{self, EvalConfig};
use quadfault::exec::configure_threads;
use quadfault::fault::FaultMode;
use quadfault::metrics::{read_metrics, TrainingSummary, METRICS_FILE};
use quadfault::selftest::run_selftest;
use quadfault::terrain::TerrainSelect;
use quadfault::trainer::Trainer;

const OUT_ENV: &str = "QUADFAULT_OUT";
const THREADS_ENV: &str = "QUADFAULT_THREADS";
const REPORT_JSON: &str = "report.json";

#[derive(Parser)]
#[command(name = "quadfault", version, about = "Fault-tolerant quadruped locomotion training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent from a config file.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a training checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many iterations (checkpointing at the end).
        #[arg(long)]
        max_iterations: Option<u64>,
    },
    /// Run deployment episodes with a trained checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = eval::DEFAULT_EPISODES)]
        episodes: usize,
        #[arg(long, default_value = "hardlock")]
        fault_mode: FaultMode,
        #[arg(long, default_value = "all")]
        terrain: TerrainSelect,
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarize a training or evaluation directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Write the joint trace of one evaluated episode as JSON lines.
    TraceExport {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        episode: usize,
        /// Keep only the last seconds before the lock onwards.
        #[arg(long)]
        window: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite.
    Selftest,
}

fn out_dir(flag: Option<PathBuf>) -> Result<PathBuf> {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .context("no output directory: pass --out or set QUADFAULT_OUT")
}

fn train(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    resume: Option<PathBuf>,
    max_iterations: Option<u64>,
) -> Result<()> {
    let mut cfg = match &config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut trainer = match resume {
        Some(ck) => {
            let expected = config.is_some().then_some(&cfg);
            let out = out.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from));
            Trainer::resume(&ck, expected, out)?
        }
        None => {
            cfg.out_dir = Some(out_dir(out)?);
            Trainer::new(cfg)?
        }
    };
    trainer.run(max_iterations)?;
    if let Some(s) = TrainingSummary::from_metrics(trainer.metrics()) {
        print!("{}", s.render());
    }
    Ok(())
}

fn eval_cmd(checkpoint: &Path, cfg: EvalConfig, out: Option<PathBuf>) -> Result<()> {
    let dir = out_dir(out)?;
    let (agent, run) = eval::load_agent(checkpoint)?;
    let records = eval::run_eval(&agent, &run, &cfg)?;
    let report = eval::write_eval_dir(&dir, run.variant.label(), &records, run.env.control_dt)?;
    run.write_resolved(&dir)?;
    print!("{}", eval::render_table(&report));
    Ok(())
}

fn report(run: &Path) -> Result<()> {
    let mut json = serde_json::Map::new();
    let metrics_path = run.join(METRICS_FILE);
    if metrics_path.exists() {
        let metrics = read_metrics(&metrics_path)?;
        if let Some(s) = TrainingSummary::from_metrics(&metrics) {
            print!("{}", s.render());
            json.insert("training".into(), serde_json::to_value(&s)?);
        }
    }
    if run.join(eval::REPORT_FILE).exists() {
        let r = eval::read_report(run)?;
        if !json.is_empty() {
            println!();
        }
        print!("{}", eval::render_table(&r));
        json.insert("eval".into(), serde_json::to_value(&r)?);
    }
    if json.is_empty() {
        bail!("{} holds neither {} nor {}", run.display(), METRICS_FILE, eval::REPORT_FILE);
    }
    std::fs::write(run.join(REPORT_JSON), serde_json::to_vec_pretty(&json)?)?;
    Ok(())
}

fn trace_export(run: &Path, episode: usize, window: Option<f64>, out: Option<PathBuf>) -> Result<()> {
    let resolved = run.join(RESOLVED_CONFIG_FILE);
    let control_dt = if resolved.exists() {
        load_config(&resolved)?.env.control_dt
    } else {
        RunConfig::default().env.control_dt
    };
    let path = eval::export_trace_file(run, episode, window, control_dt, out.as_deref())?;
    println!("{}", path.display());
    Ok(())
}

fn selftest() -> Result<bool> {
    let results = run_selftest();
    for r in &results {
        println!("{} {:<18} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    Ok(results.iter().all(|r| r.passed))
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = std::env::var_os(THREADS_ENV) {
        let n: usize = n.to_string_lossy().parse().context("QUADFAULT_THREADS must be a positive integer")?;
        configure_threads(n).map_err(anyhow::Error::msg)?;
    }
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            resume,
            max_iterations,
        } => train(config, seed, out, resume, max_iterations)?,
        Command::Eval {
            checkpoint,
            episodes,
            fault_mode,
            terrain,
            trace,
            out,
            seed,
        } => {
            let cfg = EvalConfig {
                episodes_per_terrain: episodes,
                fault_mode,
                terrain,
                seed,
                trace,
                ..EvalConfig::default()
            };
            eval_cmd(&checkpoint, cfg, out)?
        }
        Command::Report { run } => report(&run)?,
        Command::TraceExport {
            run,
            episode,
            window,
            out,
        } => trace_export(&run, episode, window, out)?,
        Command::Selftest => return selftest(),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let chain: Vec<String> = e.chain().skip(1).map(|c| c.to_string()).collect();
            let err = serde_json::json!({ "error": e.to_string(), "causes": chain });
            eprintln!("{err}");
            ExitCode::from(1)
        }
    }
}
