//! The locomotion environment: observations, reward, domain randomization,
//! fault injection, termination and a batched interface with auto-reset.

mod dr;
mod obs;
mod reward;
mod trace;
mod vec;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    pd_torque, step, ContactParams, HeightField, Interval, PdGains, RobotModel, RobotState, SimError, StepContext,
    NUM_JOINTS,
};
use crate::fault::{sample_faults, FaultConfig, FaultMode, FaultSpec};
use crate::rng::{rng_for, stream, Rng};
use crate::terrain::{sample_heightmap, TerrainField};

pub use dr::{domain_randomize, DrParams, DrRanges, DR_DIM};
pub use obs::{
    build_observation, observation_layout, privileged_layout, privileged_vector, NoiseConfig, Observation,
    ObservationHistory, FLAG_DIM, HISTORY_LEN, OBS_DIM, PRIV_DIM_FF, PRIV_DIM_NO_FF, SENSOR_DIM, STATE_DIM,
};
pub use reward::{compute_reward, RewardTerms, RewardWeights};
pub use trace::TraceRecord;
pub use vec::{VecEnv, VecStep};

pub const ACTION_DIM: usize = NUM_JOINTS;
pub type Action = [f64; ACTION_DIM];

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("env {env_id}: non-finite action component {index}")]
    InvalidAction { env_id: usize, index: usize },
    #[error("expected {expected} actions, got {actual}")]
    BatchSize { expected: usize, actual: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Termination {
    /// Minimum base height above the terrain under the base (m).
    pub min_height: f64,
    /// Maximum |roll| and |pitch| (rad).
    pub max_tilt: f64,
}

impl Default for Termination {
    fn default() -> Self {
        Self {
            min_height: 0.15,
            max_tilt: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Training episode length in control ticks.
    pub episode_ticks: u32,
    pub control_dt: f64,
    pub substeps: u32,
    /// Commanded forward speed (m/s).
    pub target_speed: f64,
    /// Joint-target offset per unit action (rad).
    pub action_scale: f64,
    pub kp: f64,
    pub kd: f64,
    pub noise: NoiseConfig,
    pub reward: RewardWeights,
    pub dr: DrRanges,
    pub termination: Termination,
    /// Spawn height of the base above the terrain (m).
    pub spawn_height: Interval,
    /// Half-width of the uniform perturbation of the initial joint angles (rad).
    pub init_joint_noise: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            episode_ticks: 1000,
            control_dt: 0.02,
            substeps: 4,
            target_speed: 0.5,
            action_scale: 0.25,
            kp: 20.0,
            kd: 0.5,
            noise: NoiseConfig::default(),
            reward: RewardWeights::default(),
            dr: DrRanges::default(),
            termination: Termination::default(),
            spawn_height: Interval::new(0.28, 0.36),
            init_joint_noise: 0.05,
        }
    }
}

impl EnvConfig {
    pub fn physics_dt(&self) -> f64 {
        self.control_dt / self.substeps as f64
    }

    pub fn validate(&self) -> Result<(), (String, String)> {
        let err = |k: &str, c: &str| Err((k.to_string(), c.to_string()));
        if self.episode_ticks == 0 {
            return err("episode_ticks", "must be positive");
        }
        if !(self.control_dt > 0.0) || self.substeps == 0 {
            return err("control_dt", "control_dt and substeps must be positive");
        }
        if !(self.kp > 0.0 && self.kd > 0.0) {
            return err("kp", "PD gains must be positive");
        }
        if !(self.action_scale > 0.0) {
            return err("action_scale", "must be positive");
        }
        if !(self.noise.q >= 0.0 && self.noise.dq >= 0.0 && self.noise.roll_pitch >= 0.0) {
            return err("noise", "amplitudes must be non-negative");
        }
        if !(self.spawn_height.lo <= self.spawn_height.hi && self.spawn_height.lo > 0.0) {
            return err("spawn_height", "need 0 < lo <= hi");
        }
        if !(self.init_joint_noise >= 0.0) {
            return err("init_joint_noise", "must be non-negative");
        }
        if !(self.termination.min_height >= 0.0 && self.termination.max_tilt > 0.0) {
            return err("termination", "min_height >= 0 and max_tilt > 0 required");
        }
        self.dr.validate()
    }
}

/// Everything an env needs that is shared across a batch.
#[derive(Clone, Debug)]
pub struct EnvSettings {
    pub env: EnvConfig,
    pub robot: RobotModel,
    pub contact: ContactParams,
    pub fault: FaultConfig,
    pub fault_mode: FaultMode,
    /// Include the failure-flag one-hot in the privileged vector.
    pub with_flag: bool,
    pub run_seed: u64,
    /// When set, episodes end this many ticks after the scheduled fault time
    /// instead of at `episode_ticks` (evaluation protocol).
    pub post_fault_horizon: Option<u32>,
    pub trace: bool,
}

impl EnvSettings {
    pub fn priv_dim(&self) -> usize {
        if self.with_flag {
            PRIV_DIM_FF
        } else {
            PRIV_DIM_NO_FF
        }
    }
}

/// True iff the base is too low over the local terrain or tilted too far.
pub fn is_terminated(state: &RobotState, terrain: &dyn HeightField, t: &Termination) -> bool {
    let ground = terrain.height_at(state.base_pos[0], state.base_pos[1]);
    let (roll, pitch, _) = state.roll_pitch_yaw();
    state.base_pos[2] - ground < t.min_height || roll.abs() > t.max_tilt || pitch.abs() > t.max_tilt
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub f_t: usize,
    /// Scheduled fault time (s); infinite when none is scheduled.
    pub t_f: f64,
    /// Ticks elapsed in the episode after this step.
    pub tick: u32,
    /// Clean base-frame linear velocity.
    pub body_vel: [f64; 3],
    pub terms: RewardTerms,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Serializable per-env state, enough to continue an episode bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSnapshot {
    pub index: usize,
    pub terrain: TerrainField,
    pub state: RobotState,
    pub dr: DrParams,
    pub fault: FaultSpec,
    pub rng: Rng,
    pub history: ObservationHistory,
    pub a_prev: Action,
    pub tau: [f64; NUM_JOINTS],
    pub episode: u64,
    pub tick: u32,
    pub max_ticks: u32,
    pub episode_return: f64,
}

/// One simulated robot on its own terrain.
#[derive(Clone, Debug)]
pub struct Env {
    index: usize,
    settings: Arc<EnvSettings>,
    terrain: TerrainField,
    state: RobotState,
    dr: DrParams,
    fault: FaultSpec,
    rng: Rng,
    history: ObservationHistory,
    observation: Observation,
    a_prev: Action,
    tau: [f64; NUM_JOINTS],
    episode: u64,
    tick: u32,
    max_ticks: u32,
    episode_return: f64,
    trace: Vec<TraceRecord>,
}

impl Env {
    pub fn new(index: usize, settings: Arc<EnvSettings>, terrain: TerrainField) -> Self {
        let mut env = Self {
            index,
            terrain,
            state: RobotState::standing(&settings.robot, 0.0, 0.0, 0.3),
            dr: DrParams::nominal(),
            fault: FaultSpec::none(),
            rng: rng_for(&[settings.run_seed, stream::EPISODE, index as u64, 0]),
            history: ObservationHistory::default(),
            observation: [0.0; OBS_DIM],
            a_prev: [0.0; ACTION_DIM],
            tau: [0.0; NUM_JOINTS],
            episode: 0,
            tick: 0,
            max_ticks: settings.env.episode_ticks,
            episode_return: 0.0,
            trace: Vec::new(),
            settings,
        };
        env.reset_to(0);
        env
    }

    /// Starts episode number `episode` with its own RNG stream.
    pub fn reset_to(&mut self, episode: u64) {
        let s = Arc::clone(&self.settings);
        self.episode = episode;
        self.rng = rng_for(&[s.run_seed, stream::EPISODE, self.index as u64, episode]);
        let rng = &mut self.rng;
        self.dr = domain_randomize(rng, &s.env.dr);
        self.fault = sample_faults(rng, &s.fault, s.fault_mode.locked_joints().max(1));
        if s.fault_mode == FaultMode::None {
            // keep T_f as a reference time, lock nothing
            self.fault.locks.clear();
        }
        let lift = if s.env.spawn_height.lo < s.env.spawn_height.hi {
            rand::Rng::random_range(rng, s.env.spawn_height.lo..=s.env.spawn_height.hi)
        } else {
            s.env.spawn_height.lo
        };
        let ground = self.terrain.height(0.0, 0.0);
        let mut state = RobotState::standing(&s.robot, 0.0, 0.0, ground + lift);
        let limits = s.robot.joint_limits();
        for j in 0..NUM_JOINTS {
            let d = if s.env.init_joint_noise > 0.0 {
                rand::Rng::random_range(rng, -s.env.init_joint_noise..=s.env.init_joint_noise)
            } else {
                0.0
            };
            state.q[j] = limits[j].clamp(state.q[j] + d);
        }
        self.state = state;
        self.a_prev = [0.0; ACTION_DIM];
        self.tau = [0.0; NUM_JOINTS];
        self.tick = 0;
        self.episode_return = 0.0;
        self.max_ticks = match s.post_fault_horizon {
            Some(h) if self.fault.t_f.is_finite() => self.fault_tick() + h,
            _ => s.env.episode_ticks,
        };
        self.history.clear();
        self.observation = build_observation(&self.state, &self.a_prev, &mut self.rng, &s.env.noise);
        self.history.push(self.observation);
        self.trace.clear();
    }

    /// Resets into the next episode.
    pub fn reset(&mut self) {
        self.reset_to(self.episode + 1);
    }

    /// Shortens the current episode by `ticks` so a batch of envs does not
    /// reset in lockstep.
    pub fn stagger(&mut self, ticks: u32) {
        self.max_ticks = self.max_ticks.saturating_sub(ticks).max(1);
    }

    /// First tick at which the scheduled fault is due.
    pub fn fault_tick(&self) -> u32 {
        let dt = self.settings.env.control_dt;
        (self.fault.t_f / dt - 1e-9).ceil().max(0.0) as u32
    }

    pub fn index(&self) -> usize {
        self.index
    }
    pub fn settings(&self) -> &EnvSettings {
        &self.settings
    }
    pub fn state(&self) -> &RobotState {
        &self.state
    }
    pub fn terrain(&self) -> &TerrainField {
        &self.terrain
    }
    pub fn fault(&self) -> &FaultSpec {
        &self.fault
    }
    pub fn dr(&self) -> &DrParams {
        &self.dr
    }
    pub fn observation(&self) -> &Observation {
        &self.observation
    }
    pub fn history(&self) -> &ObservationHistory {
        &self.history
    }
    pub fn tick(&self) -> u32 {
        self.tick
    }
    pub fn max_ticks(&self) -> u32 {
        self.max_ticks
    }
    pub fn episode(&self) -> u64 {
        self.episode
    }
    pub fn episode_return(&self) -> f64 {
        self.episode_return
    }
    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }
    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.trace)
    }

    /// Privileged vector for the current state.
    pub fn privileged(&self) -> Vec<f64> {
        let heights = sample_heightmap(&self.terrain, &self.state);
        let flag = self.settings.with_flag.then_some(self.fault.f_t);
        privileged_vector(&self.dr, &self.state, &heights, flag)
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            index: self.index,
            terrain: self.terrain.clone(),
            state: self.state.clone(),
            dr: self.dr.clone(),
            fault: self.fault.clone(),
            rng: self.rng.clone(),
            history: self.history.clone(),
            a_prev: self.a_prev,
            tau: self.tau,
            episode: self.episode,
            tick: self.tick,
            max_ticks: self.max_ticks,
            episode_return: self.episode_return,
        }
    }

    pub fn from_snapshot(settings: Arc<EnvSettings>, snap: EnvSnapshot) -> Self {
        Self {
            index: snap.index,
            settings,
            terrain: snap.terrain,
            state: snap.state,
            dr: snap.dr,
            fault: snap.fault,
            rng: snap.rng,
            observation: *snap.history.newest(),
            history: snap.history,
            a_prev: snap.a_prev,
            tau: snap.tau,
            episode: snap.episode,
            tick: snap.tick,
            max_ticks: snap.max_ticks,
            episode_return: snap.episode_return,
            trace: Vec::new(),
        }
    }

    /// Overrides the physical state (tests and diagnostics).
    pub fn set_state(&mut self, state: RobotState) {
        self.state = state;
    }

    /// Advances one control tick. The env does not reset itself; see [`VecEnv`].
    pub fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        if let Some(index) = action.iter().position(|a| !a.is_finite()) {
            return Err(EnvError::InvalidAction {
                env_id: self.index,
                index,
            });
        }
        let s = Arc::clone(&self.settings);
        let cfg = &s.env;
        let model = &s.robot;
        let t = self.tick as f64 * cfg.control_dt;
        self.fault.maybe_trigger(&self.state.q, t, model);

        let q_default = model.q_default();
        let mut target: [f64; NUM_JOINTS] = std::array::from_fn(|j| q_default[j] + cfg.action_scale * action[j]);
        if s.fault_mode == FaultMode::Softlock {
            target = self.fault.softlock_clip(&target);
        }
        let limits = if s.fault_mode.overwrites_limits() {
            self.fault.active_limits(model)
        } else {
            model.joint_limits()
        };
        let gains = PdGains::uniform(cfg.kp * self.dr.kp_scale, cfg.kd * self.dr.kd_scale);
        let ctx = StepContext {
            dt: cfg.physics_dt(),
            contact: s.contact.with_friction(self.dr.friction),
            limits: &limits,
            payload: self.dr.payload,
            env_id: self.index,
        };
        let prev = self.state.clone();
        let mut state = self.state.clone();
        for _ in 0..cfg.substeps {
            self.tau = pd_torque(&target, &state, &gains, &self.dr.motor_strength, model.torque_limit);
            state = step(&state, model, &self.tau, &self.terrain, &ctx)?;
        }
        self.state = state;
        self.tick += 1;

        let terminated = is_terminated(&self.state, &self.terrain, &cfg.termination);
        let truncated = !terminated && self.tick >= self.max_ticks;
        let (reward, terms) = compute_reward(
            &prev,
            &self.state,
            action,
            &self.a_prev,
            &self.tau,
            terminated,
            &cfg.reward,
            cfg.target_speed,
            cfg.control_dt,
        );
        self.episode_return += reward;
        self.a_prev = *action;
        self.observation = build_observation(&self.state, &self.a_prev, &mut self.rng, &cfg.noise);
        self.history.push(self.observation);

        if s.trace {
            self.trace.push(TraceRecord {
                tick: self.tick,
                time: self.tick as f64 * cfg.control_dt,
                base_pos: self.state.base_pos,
                base_quat: self.state.base_quat,
                base_lin_vel: self.state.base_lin_vel,
                q: self.state.q,
                dq: self.state.dq,
                tau: self.tau,
                action: *action,
                reward: terms,
                f_t: self.fault.f_t,
                locked_joint: self.fault.triggered().then(|| self.fault.f_t),
                theta_allowed: self.fault.theta_allowed().filter(|_| self.fault.triggered()).map(|a| [a.lo, a.hi]),
                t_f: self.fault.t_f.is_finite().then_some(self.fault.t_f),
            });
        }

        Ok(StepResult {
            observation: self.observation,
            reward,
            terminated,
            truncated,
            info: StepInfo {
                f_t: self.fault.f_t,
                t_f: self.fault.t_f,
                tick: self.tick,
                body_vel: self.state.body_lin_vel(),
                terms,
            },
        })
    }
}
