use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Interval, NUM_JOINTS};

pub const DR_DIM: usize = 4 + NUM_JOINTS;

/// Per-episode randomized physical parameters `d_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrParams {
    pub friction: f64,
    pub kp_scale: f64,
    pub kd_scale: f64,
    /// Extra mass on the trunk (kg).
    pub payload: f64,
    pub motor_strength: [f64; NUM_JOINTS],
}

impl DrParams {
    /// Parameters used when randomization is switched off.
    pub fn nominal() -> Self {
        Self {
            friction: 0.8,
            kp_scale: 1.0,
            kd_scale: 1.0,
            payload: 0.0,
            motor_strength: [1.0; NUM_JOINTS],
        }
    }

    /// `[friction, kp_scale, kd_scale, payload, strength × 12]`
    pub fn to_array(&self) -> [f64; DR_DIM] {
        let mut out = [0.0; DR_DIM];
        out[..4].copy_from_slice(&[self.friction, self.kp_scale, self.kd_scale, self.payload]);
        out[4..].copy_from_slice(&self.motor_strength);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrRanges {
    pub enabled: bool,
    pub friction: Interval,
    pub kp_scale: Interval,
    pub kd_scale: Interval,
    pub payload: Interval,
    pub motor_strength: Interval,
}

impl Default for DrRanges {
    fn default() -> Self {
        Self {
            enabled: true,
            friction: Interval::new(0.4, 1.25),
            kp_scale: Interval::new(0.8, 1.2),
            kd_scale: Interval::new(0.8, 1.2),
            payload: Interval::new(0.0, 2.0),
            motor_strength: Interval::new(0.8, 1.0),
        }
    }
}

impl DrRanges {
    pub fn validate(&self) -> Result<(), (String, String)> {
        let named = [
            ("friction", self.friction),
            ("kp_scale", self.kp_scale),
            ("kd_scale", self.kd_scale),
            ("payload", self.payload),
            ("motor_strength", self.motor_strength),
        ];
        for (name, r) in named {
            if !(r.lo <= r.hi) || !r.lo.is_finite() || !r.hi.is_finite() {
                return Err((format!("dr.{name}"), format!("need lo <= hi, got [{}, {}]", r.lo, r.hi)));
            }
        }
        if !(self.friction.lo > 0.0 && self.kp_scale.lo > 0.0 && self.kd_scale.lo > 0.0 && self.motor_strength.lo > 0.0) {
            return Err(("dr".into(), "friction, gain scales and motor strength must be positive".into()));
        }
        if self.payload.lo < 0.0 {
            return Err(("dr.payload".into(), "payload must be non-negative".into()));
        }
        Ok(())
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, r: Interval) -> f64 {
    if r.lo == r.hi {
        r.lo
    } else {
        rng.random_range(r.lo..r.hi)
    }
}

/// Uniform draws inside each range; nominal parameters when disabled.
pub fn domain_randomize<R: Rng + ?Sized>(rng: &mut R, ranges: &DrRanges) -> DrParams {
    if !ranges.enabled {
        return DrParams::nominal();
    }
    DrParams {
        friction: draw(rng, ranges.friction),
        kp_scale: draw(rng, ranges.kp_scale),
        kd_scale: draw(rng, ranges.kd_scale),
        payload: draw(rng, ranges.payload),
        motor_strength: std::array::from_fn(|_| draw(rng, ranges.motor_strength)),
    }
}
