use serde::{Deserialize, Serialize};

use crate::dynamics::{JOINT_NAMES, LEG_NAMES, NUM_JOINTS, NUM_LEGS};

use super::{EpisodeRecord, EvalError};

/// Survival time as a percentage of the post-failure horizon.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurvivalStats {
    pub average: f64,
    pub p25: f64,
    pub p50: f64,
    pub episodes: usize,
}

/// Lower-value percentile of an ascending slice: element `floor(p·(n−1))`.
pub fn lower_percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty slice");
    let idx = (p * (sorted.len() - 1) as f64).floor() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

pub fn survival_stats(records: &[EpisodeRecord]) -> Result<SurvivalStats, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut f: Vec<f64> = records.iter().map(EpisodeRecord::survival_fraction).collect();
    f.sort_by(f64::total_cmp);
    let average = f.iter().sum::<f64>() / f.len() as f64 * 100.0;
    Ok(SurvivalStats {
        average,
        p25: lower_percentile(&f, 0.25) * 100.0,
        p50: lower_percentile(&f, 0.50) * 100.0,
        episodes: f.len(),
    })
}

/// Mean forward velocity before and after the fault time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VelocityStats {
    pub before: Option<f64>,
    pub after: Option<f64>,
}

fn mean_defined(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (s, n) = xs.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn velocity_stats(records: &[EpisodeRecord]) -> Result<VelocityStats, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(VelocityStats {
        before: mean_defined(records.iter().map(|r| r.velocity_before)),
        after: mean_defined(records.iter().map(|r| r.velocity_after)),
    })
}

/// Counts of the locked joint among worst-case episodes, `[leg][joint type]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointHistogram {
    pub counts: [[u64; 3]; NUM_LEGS],
}

impl JointHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Totals per joint type (hip, thigh, calf).
    pub fn by_type(&self) -> [u64; 3] {
        std::array::from_fn(|t| self.counts.iter().map(|leg| leg[t]).sum())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("leg,joint,count\n");
        for (l, leg) in LEG_NAMES.iter().enumerate() {
            for (t, joint) in JOINT_NAMES.iter().enumerate() {
                s.push_str(&format!("{leg},{joint},{}\n", self.counts[l][t]));
            }
        }
        s
    }
}

/// Histogram of `J_f` over episodes that went down within `threshold_s`
/// seconds of the fault time.
pub fn worst_case_joint_distribution(records: &[EpisodeRecord], threshold_s: f64, control_dt: f64) -> JointHistogram {
    let mut h = JointHistogram::default();
    for r in records {
        let Some(t) = r.failure_time_after_fault(control_dt) else {
            continue;
        };
        let Some(j) = r.fault.j_f() else {
            continue;
        };
        if t < threshold_s && (1..=NUM_JOINTS).contains(&j) {
            h.counts[(j - 1) / 3][(j - 1) % 3] += 1;
        }
    }
    h
}
