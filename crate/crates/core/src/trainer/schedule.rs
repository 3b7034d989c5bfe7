use serde::{Deserialize, Serialize};

/// Progress at which the student fully takes over.
pub const TAKEOVER: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    /// Progress before which the student is not mixed in (`p_w`).
    pub warmup: f64,
    pub beta_hi: f64,
    pub beta_lo: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            warmup: 0.1,
            beta_hi: 1.0,
            beta_lo: 0.1,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<(), (String, String)> {
        if !(0.0..TAKEOVER).contains(&self.warmup) {
            return Err(("warmup".into(), format!("must lie in [0, {TAKEOVER}), got {}", self.warmup)));
        }
        if !(0.0 <= self.beta_lo && self.beta_lo <= self.beta_hi) {
            return Err((
                "beta_lo, beta_hi".into(),
                format!("need 0 <= beta_lo <= beta_hi, got {} and {}", self.beta_lo, self.beta_hi),
            ));
        }
        Ok(())
    }

    /// Fusion ratio: 0 before warmup, linear to 1 at takeover, 1 after.
    pub fn alpha(&self, p: f64) -> f64 {
        if p < self.warmup {
            0.0
        } else if p >= TAKEOVER {
            1.0
        } else {
            (p - self.warmup) / (TAKEOVER - self.warmup)
        }
    }

    /// Adaptation-loss weight: 0 before warmup, then falls from `beta_hi`
    /// to `beta_lo` as α rises.
    pub fn beta(&self, p: f64) -> f64 {
        if p < self.warmup {
            0.0
        } else {
            self.beta_hi - (self.beta_hi - self.beta_lo) * self.alpha(p)
        }
    }
}

/// `α·ẑ + (1−α)·z`, returning exact copies at the endpoints.
pub fn fuse_latent(z_student: &[f32], z_teacher: &[f32], alpha: f32) -> Result<Vec<f32>, String> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(format!("fusion ratio must lie in [0, 1], got {alpha}"));
    }
    if z_student.len() != z_teacher.len() {
        return Err(format!("latent lengths differ: {} vs {}", z_student.len(), z_teacher.len()));
    }
    Ok(if alpha == 0.0 {
        z_teacher.to_vec()
    } else if alpha == 1.0 {
        z_student.to_vec()
    } else {
        z_student
            .iter()
            .zip(z_teacher)
            .map(|(&s, &t)| alpha * s + (1.0 - alpha) * t)
            .collect()
    })
}
