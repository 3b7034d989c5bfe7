use serde::{Deserialize, Serialize};

use crate::dynamics::{RobotState, NUM_JOINTS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub tracking: f64,
    pub lin_vel: f64,
    pub ang_vel: f64,
    pub power: f64,
    pub action_rate: f64,
    pub joint_acc: f64,
    pub termination: f64,
    /// Sharpness of the tracking kernel `exp(−k·(v_x − v*)²)`.
    pub tracking_sharpness: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            tracking: 1.0,
            lin_vel: -1.0,
            ang_vel: -0.05,
            power: -0.0002,
            action_rate: -0.01,
            joint_acc: -2.5e-7,
            termination: -10.0,
            tracking_sharpness: 4.0,
        }
    }
}

/// Weighted reward terms of one transition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub tracking: f64,
    pub lin_vel: f64,
    pub ang_vel: f64,
    pub power: f64,
    pub action_rate: f64,
    pub joint_acc: f64,
    pub termination: f64,
}

impl RewardTerms {
    pub const NAMES: [&'static str; 7] =
        ["tracking", "lin_vel", "ang_vel", "power", "action_rate", "joint_acc", "termination"];

    pub fn total(&self) -> f64 {
        self.to_array().iter().sum()
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.tracking,
            self.lin_vel,
            self.ang_vel,
            self.power,
            self.action_rate,
            self.joint_acc,
            self.termination,
        ]
    }

    pub fn add_assign(&mut self, o: &RewardTerms) {
        self.tracking += o.tracking;
        self.lin_vel += o.lin_vel;
        self.ang_vel += o.ang_vel;
        self.power += o.power;
        self.action_rate += o.action_rate;
        self.joint_acc += o.joint_acc;
        self.termination += o.termination;
    }
}

/// Per-tick reward. Velocities are read in the base frame; joint
/// acceleration is the finite difference over one control tick `dt`.
#[allow(clippy::too_many_arguments)]
pub fn compute_reward(
    prev: &RobotState,
    cur: &RobotState,
    action: &[f64; NUM_JOINTS],
    prev_action: &[f64; NUM_JOINTS],
    tau: &[f64; NUM_JOINTS],
    terminated: bool,
    w: &RewardWeights,
    target_speed: f64,
    dt: f64,
) -> (f64, RewardTerms) {
    let v = cur.body_lin_vel();
    let omega = cur.body_ang_vel();
    let err = v[0] - target_speed;
    let mut power = 0.0;
    let mut rate = 0.0;
    let mut acc = 0.0;
    for j in 0..NUM_JOINTS {
        power += (tau[j] * cur.dq[j]).abs();
        rate += (action[j] - prev_action[j]).powi(2);
        acc += ((cur.dq[j] - prev.dq[j]) / dt).powi(2);
    }
    let terms = RewardTerms {
        tracking: w.tracking * (-w.tracking_sharpness * err * err).exp(),
        lin_vel: w.lin_vel * (v[1] * v[1] + v[2] * v[2]),
        ang_vel: w.ang_vel * (omega[0] * omega[0] + omega[1] * omega[1]),
        power: w.power * power,
        action_rate: w.action_rate * rate,
        joint_acc: w.joint_acc * acc,
        termination: if terminated { w.termination } else { 0.0 },
    };
    (terms.total(), terms)
}
