use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::terrain::TerrainKind;

use super::{survival_stats, velocity_stats, EpisodeRecord, EvalError, SurvivalStats, VelocityStats, EVAL_TERRAINS};

/// One row of the deployment table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerrainRow {
    pub terrain: String,
    pub velocity: VelocityStats,
    pub survival: SurvivalStats,
}

/// Per-terrain rows plus the pooled "All" row of one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent: String,
    pub rows: Vec<TerrainRow>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub agents: Vec<AgentSummary>,
}

pub fn terrain_label(kind: TerrainKind) -> &'static str {
    match kind {
        TerrainKind::Flat => "Flat",
        TerrainKind::SmoothSlope => "Smooth Slope",
        TerrainKind::RoughSlope => "Rough Slope",
        TerrainKind::DiscreteObstacles => "Discrete",
    }
}

impl AgentSummary {
    pub fn from_records(agent: &str, records: &[EpisodeRecord]) -> Result<Self, EvalError> {
        let mut rows = Vec::new();
        let kinds = std::iter::once(TerrainKind::Flat).chain(EVAL_TERRAINS);
        for kind in kinds {
            let subset: Vec<EpisodeRecord> = records.iter().filter(|r| r.terrain == kind).cloned().collect();
            if subset.is_empty() {
                continue;
            }
            rows.push(TerrainRow {
                terrain: terrain_label(kind).into(),
                velocity: velocity_stats(&subset)?,
                survival: survival_stats(&subset)?,
            });
        }
        if !records.is_empty() {
            rows.push(TerrainRow {
                terrain: "All".into(),
                velocity: velocity_stats(records)?,
                survival: survival_stats(records)?,
            });
        }
        Ok(Self {
            agent: agent.into(),
            rows,
        })
    }

    pub fn pooled(&self) -> Option<&TerrainRow> {
        self.rows.iter().find(|r| r.terrain == "All")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into())
}

/// Plain-text table: agent, terrain, velocity before/after, survival
/// average/P25/P50.
pub fn render_table(report: &EvalReport) -> String {
    let mut s = String::new();
    let rule = "-".repeat(86);
    let _ = writeln!(
        s,
        "{:<22} {:<14} | {:>8} {:>8} | {:>8} {:>8} {:>8}",
        "Agent", "Terrain", "Vel (m/s)", "", "Survival", "Time (%)", ""
    );
    let _ = writeln!(
        s,
        "{:<22} {:<14} | {:>8} {:>8} | {:>8} {:>8} {:>8}",
        "", "", "Before", "After", "Average", "P25", "P50"
    );
    let _ = writeln!(s, "{rule}");
    for a in &report.agents {
        for (i, r) in a.rows.iter().enumerate() {
            let name = if i == 0 { a.agent.as_str() } else { "" };
            if r.terrain == "All" && a.rows.len() > 1 {
                let _ = writeln!(s, "{:<22} {}", "", "-".repeat(63));
            }
            let _ = writeln!(
                s,
                "{:<22} {:<14} | {:>8} {:>8} | {:>8.1} {:>8.1} {:>8.1}",
                name,
                r.terrain,
                fmt_opt(r.velocity.before),
                fmt_opt(r.velocity.after),
                r.survival.average,
                r.survival.p25,
                r.survival.p50
            );
        }
        let _ = writeln!(s, "{rule}");
    }
    s
}
