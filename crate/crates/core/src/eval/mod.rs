//! Virtual deployment: batched evaluation episodes with a joint failure,
//! velocity and survival statistics, worst-case joint histograms and traces.

mod files;
mod report;
mod stats;

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::config::RunConfig;
use crate::env::{Env, EnvError, EnvSettings, TraceRecord};
use crate::exec::{map_mut, ExecMode};
use crate::fault::{FaultMode, FaultSpec};
use crate::nn::NnError;
use crate::rng::{hash_words, stream};
use crate::terrain::{TerrainField, TerrainKind, TerrainSelect, NUM_LEVELS};
use crate::trainer::{agent_shape, deployment_alpha, gather_inputs, Agent, TrainCheckpoint};

pub use files::{
    export_trace_file, read_records, read_report, write_eval_dir, HISTOGRAM_FILE, RECORDS_FILE, REPORT_FILE, TABLE_FILE,
    TRACE_DIR,
};
pub use report::{render_table, terrain_label, AgentSummary, EvalReport, TerrainRow};
pub use stats::{
    lower_percentile, survival_stats, velocity_stats, worst_case_joint_distribution, JointHistogram, SurvivalStats,
    VelocityStats,
};

/// Control ticks simulated after the fault time (20 s at 50 Hz).
pub const POST_FAULT_TICKS: u32 = 1000;
pub const WORST_CASE_THRESHOLD_S: f64 = 3.0;
pub const DEFAULT_EPISODES: usize = 150;

/// Terrains of the deployment test, in report order.
pub const EVAL_TERRAINS: [TerrainKind; 3] = [
    TerrainKind::SmoothSlope,
    TerrainKind::RoughSlope,
    TerrainKind::DiscreteObstacles,
];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint does not match this build: {0}")]
    Layout(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("statistics of an empty record set")]
    Empty,
    #[error("episode was run without tracing")]
    TracingDisabled,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub episodes_per_terrain: usize,
    pub fault_mode: FaultMode,
    pub terrain: TerrainSelect,
    pub seed: u64,
    pub trace: bool,
    pub exec: ExecMode,
    /// Episodes simulated side by side.
    pub batch: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes_per_terrain: DEFAULT_EPISODES,
            fault_mode: FaultMode::Hardlock,
            terrain: TerrainSelect::All,
            seed: 0,
            trace: false,
            exec: ExecMode::default(),
            batch: 64,
        }
    }
}

impl EvalConfig {
    pub fn terrains(&self) -> Vec<TerrainKind> {
        match self.terrain {
            TerrainSelect::All => EVAL_TERRAINS.to_vec(),
            TerrainSelect::Flat => vec![TerrainKind::Flat],
            TerrainSelect::Smooth => vec![TerrainKind::SmoothSlope],
            TerrainSelect::Rough => vec![TerrainKind::RoughSlope],
            TerrainSelect::Discrete => vec![TerrainKind::DiscreteObstacles],
        }
    }
}

/// Outcome of one deployment episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub terrain: TerrainKind,
    pub level: usize,
    /// Fault state at the end of the episode (allowed range filled once triggered).
    pub fault: FaultSpec,
    pub fault_tick: u32,
    pub ticks: u32,
    /// Ticks survived at or after the fault time, at most [`POST_FAULT_TICKS`].
    pub ticks_after: u32,
    pub terminated: bool,
    pub velocity_before: Option<f64>,
    /// Absent when the episode ended before the fault time.
    pub velocity_after: Option<f64>,
    pub episode_return: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRecord>>,
}

impl EpisodeRecord {
    /// `min(ticks_after / 1000, 1)`.
    pub fn survival_fraction(&self) -> f64 {
        (self.ticks_after as f64 / POST_FAULT_TICKS as f64).min(1.0)
    }

    /// Seconds survived after the fault time, `None` if the robot went down
    /// before it or survived the whole horizon.
    pub fn failure_time_after_fault(&self, control_dt: f64) -> Option<f64> {
        (self.terminated && self.ticks >= self.fault_tick).then(|| self.ticks_after as f64 * control_dt)
    }
}

/// Env settings of the deployment protocol for a given training config.
pub fn eval_settings(run: &RunConfig, cfg: &EvalConfig) -> EnvSettings {
    let mut fault = run.fault.clone();
    fault.enabled = true;
    EnvSettings {
        env: run.env.clone(),
        robot: run.robot.clone(),
        contact: run.contact.clone(),
        fault,
        fault_mode: cfg.fault_mode,
        with_flag: run.variant.uses_failure_flag(),
        run_seed: hash_words(&[cfg.seed, stream::EVAL]),
        post_fault_horizon: Some(POST_FAULT_TICKS),
        trace: cfg.trace,
    }
}

struct Running {
    env: Env,
    level: usize,
    fault_tick: u32,
    v_before: (f64, u32),
    v_after: (f64, u32),
    done: Option<(u32, bool)>,
}

/// Runs `episodes_per_terrain` deterministic (mean-action) episodes on each
/// selected terrain, spread evenly over the difficulty levels.
pub fn run_eval(agent: &Agent, run: &RunConfig, cfg: &EvalConfig) -> Result<Vec<EpisodeRecord>, EvalError> {
    let settings = Arc::new(eval_settings(run, cfg));
    let alpha = deployment_alpha(run.variant);
    let with_history = agent.shape.with_student && alpha > 0.0;
    let mut records = Vec::with_capacity(cfg.episodes_per_terrain * cfg.terrains().len());
    for (ti, &kind) in cfg.terrains().iter().enumerate() {
        let terrain_seed = hash_words(&[cfg.seed, stream::TERRAIN, ti as u64]);
        let mut start = 0;
        while start < cfg.episodes_per_terrain {
            let end = (start + cfg.batch.max(1)).min(cfg.episodes_per_terrain);
            let mut batch: Vec<Running> = (start..end)
                .map(|k| {
                    let level = k % NUM_LEVELS;
                    let terrain = TerrainField::at_level(kind, level, &run.terrain_params, terrain_seed ^ k as u64);
                    let env = Env::new(ti * cfg.episodes_per_terrain + k, Arc::clone(&settings), terrain);
                    Running {
                        fault_tick: env.fault_tick(),
                        env,
                        level,
                        v_before: (0.0, 0),
                        v_after: (0.0, 0),
                        done: None,
                    }
                })
                .collect();
            loop {
                let active: Vec<usize> = (0..batch.len()).filter(|&i| batch[i].done.is_none()).collect();
                if active.is_empty() {
                    break;
                }
                let x = gather_inputs(agent, active.iter().map(|&i| &batch[i].env), with_history);
                let (mean, _, _) = agent.act(&x, alpha, cfg.exec)?;
                let mut stepping: Vec<&mut Running> = batch.iter_mut().filter(|r| r.done.is_none()).collect();
                let results = map_mut(cfg.exec, &mut stepping, |i, r| -> Result<(), EnvError> {
                    let a: [f64; 12] = std::array::from_fn(|j| mean[i * 12 + j] as f64);
                    let tick = r.env.tick();
                    let res = r.env.step(&a)?;
                    let vx = res.info.body_vel[0];
                    if tick < r.fault_tick {
                        r.v_before.0 += vx;
                        r.v_before.1 += 1;
                    } else {
                        r.v_after.0 += vx;
                        r.v_after.1 += 1;
                    }
                    if res.done() {
                        r.done = Some((res.info.tick, res.terminated));
                    }
                    Ok(())
                });
                for r in results {
                    r?;
                }
            }
            for (off, mut r) in batch.into_iter().enumerate() {
                let (ticks, terminated) = r.done.expect("episode finished");
                let mean_of = |(s, n): (f64, u32)| (n > 0).then(|| s / n as f64);
                records.push(EpisodeRecord {
                    episode: start + off,
                    terrain: kind,
                    level: r.level,
                    fault: r.env.fault().clone(),
                    fault_tick: r.fault_tick,
                    ticks,
                    ticks_after: ticks.saturating_sub(r.fault_tick).min(POST_FAULT_TICKS),
                    terminated,
                    velocity_before: mean_of(r.v_before),
                    velocity_after: mean_of(r.v_after),
                    episode_return: r.env.episode_return(),
                    trace: cfg.trace.then(|| r.env.take_trace()),
                });
            }
            start = end;
        }
    }
    Ok(records)
}

/// Loads a training checkpoint and returns the agent and its config,
/// refusing checkpoints whose observation layout differs from this build.
pub fn load_agent(path: &Path) -> Result<(Agent, RunConfig), EvalError> {
    let ck = TrainCheckpoint::load(path)?;
    let cfg = ck.header.config;
    if ck.header.observation_layout != crate::env::observation_layout() {
        return Err(EvalError::Layout("observation layout differs".into()));
    }
    if ck.header.privileged_layout != crate::env::privileged_layout(cfg.variant.uses_failure_flag()) {
        return Err(EvalError::Layout("privileged layout differs".into()));
    }
    let agent = Agent::from_store(ck.params, agent_shape(&cfg), &cfg.robot)?;
    Ok((agent, cfg))
}

/// Trace of one episode, optionally cut to the window from `before_s`
/// seconds before the lock to the end of the episode.
pub fn export_trace(record: &EpisodeRecord, before_s: Option<f64>, control_dt: f64) -> Result<Vec<TraceRecord>, EvalError> {
    let trace = record.trace.as_ref().ok_or(EvalError::TracingDisabled)?;
    Ok(match before_s {
        Some(w) => {
            let from = record.fault_tick as f64 - w / control_dt;
            trace.iter().filter(|r| r.tick as f64 > from).cloned().collect()
        }
        None => trace.clone(),
    })
}

pub fn write_trace_jsonl<W: Write>(mut w: W, trace: &[TraceRecord]) -> Result<(), EvalError> {
    for r in trace {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace_jsonl<R: BufRead>(r: R) -> Result<Vec<TraceRecord>, EvalError> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
