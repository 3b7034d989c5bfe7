//! Layout of an evaluation output directory.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{
    export_trace, render_table, worst_case_joint_distribution, write_trace_jsonl, AgentSummary, EpisodeRecord,
    EvalError, EvalReport, WORST_CASE_THRESHOLD_S,
};

pub const RECORDS_FILE: &str = "eval_records.jsonl";
pub const REPORT_FILE: &str = "eval_report.json";
pub const TABLE_FILE: &str = "eval_table.txt";
pub const HISTOGRAM_FILE: &str = "worst_case_joints.csv";
pub const TRACE_DIR: &str = "traces";

/// Writes records, the JSON and text reports and the worst-case histogram
/// into `dir`. An empty record set yields a report with no rows.
pub fn write_eval_dir(
    dir: &Path,
    agent: &str,
    records: &[EpisodeRecord],
    control_dt: f64,
) -> Result<EvalReport, EvalError> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(RECORDS_FILE))?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let report = EvalReport {
        agents: vec![AgentSummary::from_records(agent, records)?],
    };
    fs::write(dir.join(REPORT_FILE), serde_json::to_vec_pretty(&report)?)?;
    fs::write(dir.join(TABLE_FILE), render_table(&report))?;
    let hist = worst_case_joint_distribution(records, WORST_CASE_THRESHOLD_S, control_dt);
    fs::write(dir.join(HISTOGRAM_FILE), hist.to_csv())?;
    Ok(report)
}

pub fn read_records(dir: &Path) -> Result<Vec<EpisodeRecord>, EvalError> {
    let reader = BufReader::new(File::open(dir.join(RECORDS_FILE))?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn read_report(dir: &Path) -> Result<EvalReport, EvalError> {
    Ok(serde_json::from_slice(&fs::read(dir.join(REPORT_FILE))?)?)
}

/// Exports the trace of the `index`-th record of an eval directory to
/// `out` (default `traces/episode_{index}.jsonl` inside the directory).
pub fn export_trace_file(
    dir: &Path,
    index: usize,
    window_s: Option<f64>,
    control_dt: f64,
    out: Option<&Path>,
) -> Result<PathBuf, EvalError> {
    let records = read_records(dir)?;
    let record = records.get(index).ok_or_else(|| {
        EvalError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("episode {index} not found ({} records)", records.len()),
        ))
    })?;
    let trace = export_trace(record, window_s, control_dt)?;
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => dir.join(TRACE_DIR).join(format!("episode_{index}.jsonl")),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(&path)?);
    write_trace_jsonl(&mut w, &trace)?;
    w.flush()?;
    Ok(path)
}
