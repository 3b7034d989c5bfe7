use serde::{Deserialize, Serialize};

use crate::dynamics::NUM_JOINTS;

use super::reward::RewardTerms;

/// One control tick of an episode, written as a JSON line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u32,
    pub time: f64,
    pub base_pos: [f64; 3],
    pub base_quat: [f64; 4],
    pub base_lin_vel: [f64; 3],
    pub q: [f64; NUM_JOINTS],
    pub dq: [f64; NUM_JOINTS],
    pub tau: [f64; NUM_JOINTS],
    pub action: [f64; NUM_JOINTS],
    pub reward: RewardTerms,
    pub f_t: usize,
    /// 1-based locked joint, present once the fault has triggered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locked_joint: Option<usize>,
    /// `[lo, hi]` allowed range of the locked joint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_allowed: Option<[f64; 2]>,
    /// Fault time of the episode (s), when one is scheduled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_f: Option<f64>,
}
