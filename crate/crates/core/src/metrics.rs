//! Per-iteration training metrics as JSON lines.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::trainer::LossReport;

pub const METRICS_FILE: &str = "metrics.jsonl";

/// One line of the metrics log. Contains no wall-clock values so that two
/// runs with the same seed produce identical files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: u64,
    /// Env steps collected before this iteration.
    pub steps: u64,
    pub progress: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Mean return of the last 100 finished episodes.
    pub mean_episode_reward: Option<f64>,
    /// Mean length (s) of the last 100 finished episodes.
    pub mean_episode_length: Option<f64>,
    pub episodes_finished: u64,
    /// Total length (s) of the episodes finished during this iteration.
    pub finished_length_sum: f64,
    pub terminations: u64,
    /// Mean per-step reward during the rollout.
    pub step_reward: f64,
    /// Mean body-frame forward velocity during the rollout.
    pub forward_velocity: f64,
    pub reward_terms: IndexMap<String, f64>,
    pub loss: LossReport,
}

/// Headline numbers of a training run, copied from its last metrics line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub iteration: u64,
    pub steps: u64,
    pub progress: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mean_episode_reward: Option<f64>,
    pub mean_episode_length: Option<f64>,
    pub forward_velocity: f64,
    pub step_reward: f64,
}

impl TrainingSummary {
    pub fn from_metrics(metrics: &[IterationMetrics]) -> Option<Self> {
        metrics.last().map(|m| Self {
            iteration: m.iteration,
            steps: m.steps,
            progress: m.progress,
            alpha: m.alpha,
            beta: m.beta,
            mean_episode_reward: m.mean_episode_reward,
            mean_episode_length: m.mean_episode_length,
            forward_velocity: m.forward_velocity,
            step_reward: m.step_reward,
        })
    }

    pub fn render(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        format!(
            "iteration            {}\nsteps                {}\nprogress             {:.4}\nalpha                {:.4}\nbeta                 {:.4}\nmean episode reward  {}\nmean episode length  {}\nforward velocity     {:.4}\nstep reward          {:.4}\n",
            self.iteration,
            self.steps,
            self.progress,
            self.alpha,
            self.beta,
            opt(self.mean_episode_reward),
            opt(self.mean_episode_length),
            self.forward_velocity,
            self.step_reward
        )
    }
}

/// Appends metrics lines, flushing after each one.
pub struct MetricsWriter {
    file: File,
    path: PathBuf,
}

impl MetricsWriter {
    pub fn append_to(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, m: &IterationMetrics) -> std::io::Result<()> {
        let mut line = serde_json::to_vec(m)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()
    }
}

pub fn read_metrics(path: &Path) -> std::io::Result<Vec<IterationMetrics>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Drops every line with `iteration >= keep`, e.g. before resuming from a
/// checkpoint taken after `keep` iterations.
pub fn truncate_metrics(path: &Path, keep: u64) -> std::io::Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(path)?;
    let mut kept = String::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let m: IterationMetrics = serde_json::from_str(line)?;
        if m.iteration < keep {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    fs::write(path, kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_read_truncate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(METRICS_FILE);
        let mut w = MetricsWriter::append_to(&path).unwrap();
        for i in 0..5 {
            w.write(&IterationMetrics {
                iteration: i,
                step_reward: 0.1 * i as f64,
                ..Default::default()
            })
            .unwrap();
        }
        drop(w);
        assert_eq!(read_metrics(&path).unwrap().len(), 5);
        truncate_metrics(&path, 3).unwrap();
        let back = read_metrics(&path).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[2].step_reward, 0.2);
    }
}
