//! Joint-locking faults: sampling, triggering and enforcement.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Interval, RobotModel, NUM_JOINTS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaultConfig {
    pub enabled: bool,
    /// Earliest fault time (s).
    pub t_min: f64,
    /// Latest fault time (s).
    pub t_max: f64,
    /// Standard deviation of the lock tolerance (rad).
    pub theta_max: f64,
}

impl Default for FaultConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            t_min: 2.0,
            t_max: 10.0,
            theta_max: 0.2,
        }
    }
}

impl FaultConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self, episode_seconds: f64) -> Result<(), String> {
        if !(0.0 < self.t_min && self.t_min < self.t_max && self.t_max < episode_seconds) {
            return Err(format!(
                "fault window must satisfy 0 < t_min < t_max < episode length ({episode_seconds} s), got [{}, {}]",
                self.t_min, self.t_max
            ));
        }
        if !(self.theta_max > 0.0) {
            return Err("fault theta_max must be positive".into());
        }
        Ok(())
    }
}

/// How a triggered fault is enforced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultMode {
    /// No faults at all.
    None,
    /// The locked joint's limits are overwritten; the simulator enforces them.
    #[default]
    Hardlock,
    /// Commanded targets for the locked joint are clipped; limits untouched.
    Softlock,
    /// Two distinct joints lock at once (hardlock enforcement).
    Multi,
}

impl FaultMode {
    pub fn name(self) -> &'static str {
        match self {
            FaultMode::None => "none",
            FaultMode::Hardlock => "hardlock",
            FaultMode::Softlock => "softlock",
            FaultMode::Multi => "multi",
        }
    }

    pub fn locked_joints(self) -> usize {
        match self {
            FaultMode::None => 0,
            FaultMode::Hardlock | FaultMode::Softlock => 1,
            FaultMode::Multi => 2,
        }
    }

    pub fn overwrites_limits(self) -> bool {
        matches!(self, FaultMode::Hardlock | FaultMode::Multi)
    }
}

impl std::str::FromStr for FaultMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(FaultMode::None),
            "hardlock" => Ok(FaultMode::Hardlock),
            "softlock" => Ok(FaultMode::Softlock),
            "multi" => Ok(FaultMode::Multi),
            other => Err(format!("unknown fault mode '{other}' (expected none, hardlock, softlock or multi)")),
        }
    }
}

/// One locked joint. `joint` is 1-based, as in the failure flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointLock {
    pub joint: usize,
    pub theta_tol: f64,
    /// Joint angle at trigger time.
    pub center: Option<f64>,
    pub allowed: Option<Interval>,
}

/// Per-episode fault state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    /// Trigger time (s); infinite for the no-fault sentinel, stored as null.
    #[serde(with = "never_as_null")]
    pub t_f: f64,
    pub locks: Vec<JointLock>,
    /// Failure flag: 0 before trigger, the first locked joint (1..=12) after.
    pub f_t: usize,
}

impl FaultSpec {
    /// Sentinel whose flag stays 0 for the whole episode.
    pub fn none() -> Self {
        Self {
            t_f: f64::INFINITY,
            locks: Vec::new(),
            f_t: 0,
        }
    }

    pub fn is_none(&self) -> bool {
        self.locks.is_empty()
    }

    pub fn triggered(&self) -> bool {
        self.f_t != 0
    }

    /// Primary locked joint (1-based), if any.
    pub fn j_f(&self) -> Option<usize> {
        self.locks.first().map(|l| l.joint)
    }

    pub fn theta_tol(&self) -> Option<f64> {
        self.locks.first().map(|l| l.theta_tol)
    }

    /// Allowed range of the primary locked joint once triggered.
    pub fn theta_allowed(&self) -> Option<Interval> {
        self.locks.first().and_then(|l| l.allowed)
    }

    /// Locks the sampled joints at their current angles once `t ≥ t_f`.
    /// Returns whether the fault triggered on this call.
    pub fn maybe_trigger(&mut self, q: &[f64; NUM_JOINTS], t: f64, model: &RobotModel) -> bool {
        if self.triggered() || self.is_none() || t < self.t_f {
            return false;
        }
        let hw = model.joint_limits();
        for lock in &mut self.locks {
            let idx = lock.joint - 1;
            let center = q[idx];
            lock.center = Some(center);
            lock.allowed = Some(Interval::new(center - lock.theta_tol, center + lock.theta_tol).intersect(&hw[idx]));
        }
        self.f_t = self.locks[0].joint;
        true
    }

    /// Hardware limits, with each triggered locked joint narrowed to its allowed range.
    pub fn active_limits(&self, model: &RobotModel) -> [Interval; NUM_JOINTS] {
        let mut lim = model.joint_limits();
        if self.triggered() {
            for lock in &self.locks {
                if let Some(a) = lock.allowed {
                    lim[lock.joint - 1] = a;
                }
            }
        }
        lim
    }

    /// Clamps the locked joints' targets into their allowed ranges.
    pub fn softlock_clip(&self, q_target: &[f64; NUM_JOINTS]) -> [f64; NUM_JOINTS] {
        let mut out = *q_target;
        if self.triggered() {
            for lock in &self.locks {
                if let Some(a) = lock.allowed {
                    out[lock.joint - 1] = a.clamp(out[lock.joint - 1]);
                }
            }
        }
        out
    }
}

mod never_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &f64, s: S) -> Result<S::Ok, S::Error> {
        if t.is_finite() {
            s.serialize_some(t)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Draws a single-joint fault, or the sentinel when faults are disabled.
pub fn sample_fault<R: Rng + ?Sized>(rng: &mut R, config: &FaultConfig) -> FaultSpec {
    sample_faults(rng, config, 1)
}

/// Draws a fault locking `n` distinct joints at the same time.
pub fn sample_faults<R: Rng + ?Sized>(rng: &mut R, config: &FaultConfig, n: usize) -> FaultSpec {
    if !config.enabled || n == 0 {
        return FaultSpec::none();
    }
    let t_f = rng.random_range(config.t_min..=config.t_max);
    let tol = Normal::new(0.0, config.theta_max).expect("theta_max validated positive");
    let mut locks: Vec<JointLock> = Vec::with_capacity(n);
    while locks.len() < n.min(NUM_JOINTS) {
        let joint = rng.random_range(1..=NUM_JOINTS);
        let theta_tol = tol.sample(rng).abs();
        if locks.iter().any(|l| l.joint == joint) {
            continue;
        }
        locks.push(JointLock {
            joint,
            theta_tol,
            center: None,
            allowed: None,
        });
    }
    FaultSpec { t_f, locks, f_t: 0 }
}
