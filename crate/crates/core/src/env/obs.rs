use rand::Rng;

use crate::dynamics::{RobotState, JOINT_NAMES, LEG_NAMES, NUM_JOINTS, NUM_LEGS};
use crate::terrain::MAP_LEN;

use super::dr::{DrParams, DR_DIM};

pub const SENSOR_DIM: usize = 2 * NUM_JOINTS + 2 + NUM_LEGS;
pub const OBS_DIM: usize = SENSOR_DIM + NUM_JOINTS;
pub const HISTORY_LEN: usize = 50;
pub const STATE_DIM: usize = 6;
pub const FLAG_DIM: usize = NUM_JOINTS + 1;
pub const PRIV_DIM_NO_FF: usize = DR_DIM + STATE_DIM + MAP_LEN;
pub const PRIV_DIM_FF: usize = PRIV_DIM_NO_FF + FLAG_DIM;

pub type Observation = [f64; OBS_DIM];

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Uniform noise half-width on joint angles (rad).
    pub q: f64,
    /// Uniform noise half-width on joint velocities (rad/s).
    pub dq: f64,
    /// Uniform noise half-width on roll and pitch (rad).
    pub roll_pitch: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            q: 0.01,
            dq: 0.15,
            roll_pitch: 0.02,
        }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self {
            q: 0.0,
            dq: 0.0,
            roll_pitch: 0.0,
        }
    }

    /// Per-component noise bound of an observation.
    pub fn bounds(&self) -> Observation {
        let mut b = [0.0; OBS_DIM];
        b[..NUM_JOINTS].fill(self.q);
        b[NUM_JOINTS..2 * NUM_JOINTS].fill(self.dq);
        b[2 * NUM_JOINTS..2 * NUM_JOINTS + 2].fill(self.roll_pitch);
        b
    }
}

fn jitter<R: Rng + ?Sized>(rng: &mut R, amp: f64) -> f64 {
    if amp > 0.0 {
        rng.random_range(-amp..=amp)
    } else {
        0.0
    }
}

/// `[q, dq, roll, pitch, contacts, a_prev]` with additive uniform sensor noise.
pub fn build_observation<R: Rng + ?Sized>(
    state: &RobotState,
    a_prev: &[f64; NUM_JOINTS],
    rng: &mut R,
    noise: &NoiseConfig,
) -> Observation {
    let mut o = [0.0; OBS_DIM];
    for j in 0..NUM_JOINTS {
        o[j] = state.q[j] + jitter(rng, noise.q);
    }
    for j in 0..NUM_JOINTS {
        o[NUM_JOINTS + j] = state.dq[j] + jitter(rng, noise.dq);
    }
    let (roll, pitch, _) = state.roll_pitch_yaw();
    o[2 * NUM_JOINTS] = roll + jitter(rng, noise.roll_pitch);
    o[2 * NUM_JOINTS + 1] = pitch + jitter(rng, noise.roll_pitch);
    for (leg, &c) in state.foot_contact.iter().enumerate() {
        o[2 * NUM_JOINTS + 2 + leg] = if c { 1.0 } else { 0.0 };
    }
    o[SENSOR_DIM..].copy_from_slice(a_prev);
    o
}

/// Names of the observation entries, in order.
pub fn observation_layout() -> Vec<String> {
    let joints = || {
        LEG_NAMES
            .iter()
            .flat_map(|l| JOINT_NAMES.iter().map(move |j| format!("{l}_{j}")))
    };
    let mut names: Vec<String> = joints().map(|n| format!("q.{n}")).collect();
    names.extend(joints().map(|n| format!("dq.{n}")));
    names.push("imu.roll".into());
    names.push("imu.pitch".into());
    names.extend(LEG_NAMES.iter().map(|l| format!("contact.{l}")));
    names.extend(joints().map(|n| format!("a_prev.{n}")));
    names
}

/// Names of the privileged entries, in order.
pub fn privileged_layout(with_flag: bool) -> Vec<String> {
    let mut names: Vec<String> = ["dr.friction", "dr.kp_scale", "dr.kd_scale", "dr.payload"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend(
        LEG_NAMES
            .iter()
            .flat_map(|l| JOINT_NAMES.iter().map(move |j| format!("dr.strength.{l}_{j}"))),
    );
    names.extend(["state.vx", "state.vy", "state.vz", "state.wx", "state.wy", "state.wz"].map(String::from));
    names.extend((0..MAP_LEN).map(|k| format!("height.{}_{}", k / 11, k % 11)));
    if with_flag {
        names.extend((0..FLAG_DIM).map(|k| format!("flag.{k}")));
    }
    names
}

/// Privileged vector `e_t = [d_t, s_t, m_t, one_hot(f_t)]`; body-frame
/// clean velocities. The flag block is omitted when `flag` is `None`.
pub fn privileged_vector(
    dr: &DrParams,
    state: &RobotState,
    heights: &[f64; MAP_LEN],
    flag: Option<usize>,
) -> Vec<f64> {
    let mut e = Vec::with_capacity(PRIV_DIM_FF);
    e.extend_from_slice(&dr.to_array());
    e.extend_from_slice(&state.body_lin_vel());
    e.extend_from_slice(&state.body_ang_vel());
    e.extend_from_slice(heights);
    if let Some(f) = flag {
        let mut one_hot = [0.0; FLAG_DIM];
        one_hot[f.min(NUM_JOINTS)] = 1.0;
        e.extend_from_slice(&one_hot);
    }
    e
}

/// Fixed window of the last `HISTORY_LEN` observations, oldest first.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct ObservationHistory {
    buf: Vec<Observation>,
    /// Index of the oldest entry.
    head: usize,
}

impl Default for ObservationHistory {
    fn default() -> Self {
        Self::new(HISTORY_LEN)
    }
}

impl ObservationHistory {
    pub fn new(len: usize) -> Self {
        Self {
            buf: vec![[0.0; OBS_DIM]; len.max(1)],
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn clear(&mut self) {
        for o in &mut self.buf {
            *o = [0.0; OBS_DIM];
        }
        self.head = 0;
    }

    /// Drops the oldest entry and appends `o` as the newest.
    pub fn push(&mut self, o: Observation) {
        self.buf[self.head] = o;
        self.head = (self.head + 1) % self.buf.len();
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation> {
        let n = self.buf.len();
        (0..n).map(move |k| &self.buf[(self.head + k) % n])
    }

    pub fn newest(&self) -> &Observation {
        &self.buf[(self.head + self.buf.len() - 1) % self.buf.len()]
    }

    /// Time-major flat copy (`len × OBS_DIM`), oldest first.
    pub fn to_vec(&self) -> Vec<f64> {
        self.iter().flat_map(|o| o.iter().copied()).collect()
    }
}

impl From<ObservationHistory> for Vec<Vec<f64>> {
    fn from(h: ObservationHistory) -> Self {
        h.iter().map(|o| o.to_vec()).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for ObservationHistory {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, String> {
        let buf = rows
            .into_iter()
            .map(|r| Observation::try_from(r.as_slice()).map_err(|_| format!("frame of length {}", r.len())))
            .collect::<Result<Vec<_>, _>>()?;
        if buf.is_empty() {
            return Err("empty history".into());
        }
        Ok(Self { buf, head: 0 })
    }
}
