use serde::{Deserialize, Serialize};

use super::SimError;

pub const NUM_LEGS: usize = 4;
pub const NUM_JOINTS: usize = 12;
/// Leg order used by every 12-vector in the crate.
pub const LEG_NAMES: [&str; NUM_LEGS] = ["FR", "FL", "RR", "RL"];
/// Joint order within a leg.
pub const JOINT_NAMES: [&str; 3] = ["hip", "thigh", "calf"];

/// Closed interval of joint angles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Physical constants of the simulated robot (A1-sized defaults).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotModel {
    pub trunk_mass: f64,
    /// Diagonal of the trunk inertia in the body frame (kg·m²).
    pub trunk_inertia: [f64; 3],
    /// Fore/aft distance of the hips from the trunk center.
    pub hip_x: f64,
    /// Lateral distance of the hips from the trunk center.
    pub hip_y: f64,
    pub thigh_length: f64,
    pub calf_length: f64,
    pub reflected_inertia: f64,
    pub torque_limit: f64,
    pub hip_limits: Interval,
    pub thigh_limits: Interval,
    pub calf_limits: Interval,
    /// Standing pose of one leg: hip, thigh, calf.
    pub default_leg_pose: [f64; 3],
    pub gravity: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self {
            trunk_mass: 6.0,
            trunk_inertia: [0.017, 0.057, 0.065],
            hip_x: 0.18,
            hip_y: 0.08,
            thigh_length: 0.2,
            calf_length: 0.2,
            reflected_inertia: 0.03,
            torque_limit: 33.5,
            hip_limits: Interval::new(-0.8, 0.8),
            thigh_limits: Interval::new(-1.0, 3.9),
            calf_limits: Interval::new(-2.7, -0.9),
            default_leg_pose: [0.0, 0.8, -1.6],
            gravity: 9.81,
        }
    }
}

impl RobotModel {
    /// Hip position in the trunk frame.
    pub fn hip_offset(&self, leg: usize) -> [f64; 3] {
        let sx = if leg < 2 { 1.0 } else { -1.0 };
        let sy = if leg % 2 == 0 { -1.0 } else { 1.0 };
        [sx * self.hip_x, sy * self.hip_y, 0.0]
    }

    pub fn joint_limits(&self) -> [Interval; NUM_JOINTS] {
        std::array::from_fn(|j| match j % 3 {
            0 => self.hip_limits,
            1 => self.thigh_limits,
            _ => self.calf_limits,
        })
    }

    pub fn q_default(&self) -> [f64; NUM_JOINTS] {
        std::array::from_fn(|j| self.default_leg_pose[j % 3])
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidModel(m.to_string()));
        if !(self.trunk_mass > 0.0) || self.trunk_inertia.iter().any(|&i| !(i > 0.0)) {
            return bad("trunk mass and inertia must be strictly positive");
        }
        if !(self.reflected_inertia > 0.0) || !(self.torque_limit > 0.0) {
            return bad("reflected inertia and torque limit must be strictly positive");
        }
        if !(self.thigh_length > 0.0 && self.calf_length > 0.0) {
            return bad("link lengths must be strictly positive");
        }
        for (name, lim) in [("hip", self.hip_limits), ("thigh", self.thigh_limits), ("calf", self.calf_limits)] {
            if !(lim.lo < lim.hi) {
                return Err(SimError::InvalidModel(format!("{name} limits must satisfy lo < hi")));
            }
        }
        if (self.hip_limits.lo + self.hip_limits.hi).abs() > 1e-12 {
            return bad("hip limits must be symmetric");
        }
        let q = self.q_default();
        if self.joint_limits().iter().zip(q).any(|(l, v)| !l.contains(v)) {
            return bad("default pose outside joint limits");
        }
        Ok(())
    }
}

/// PD stiffness and damping per joint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: [f64; NUM_JOINTS],
    pub kd: [f64; NUM_JOINTS],
}

impl PdGains {
    pub fn uniform(kp: f64, kd: f64) -> Self {
        Self {
            kp: [kp; NUM_JOINTS],
            kd: [kd; NUM_JOINTS],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.kp.iter().chain(&self.kd).all(|&g| g > 0.0 && g.is_finite())
    }
}
