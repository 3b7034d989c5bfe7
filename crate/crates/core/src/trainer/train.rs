use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{hash_bytes, Checkpoint, CheckpointError};
use crate::config::{AgentVariant, RunConfig};
use crate::env::{
    observation_layout, privileged_layout, Action, Env, EnvSettings, EnvSnapshot, RewardTerms, VecEnv, ACTION_DIM,
};
use crate::fault::FaultMode;
use crate::metrics::{IterationMetrics, MetricsWriter, METRICS_FILE};
use crate::nn::{Adam, HALF_LN_2PI, LOG_STD_MAX, LOG_STD_MIN};
use crate::rng::{rng_for, stream, Rng};

use super::agent::{Agent, AgentInputs, AgentShape};
use super::gae::{gae_batched, normalize};
use super::ppo::{ppo_update, PpoBatch, UpdatePlan};
use super::schedule::TAKEOVER;
use super::TrainError;

pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const LATEST_CHECKPOINT: &str = "latest.qfck";
const EPISODE_WINDOW: usize = 100;

/// Everything beyond the parameters needed to continue a run bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub rng: Rng,
    pub envs: Vec<EnvSnapshot>,
    pub recent_episodes: VecDeque<(f64, f64)>,
    pub adam_step: u64,
    pub learning_rate: f32,
}

/// JSON header of a training checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerHeader {
    pub config: RunConfig,
    pub iteration: u64,
    pub steps: u64,
    pub observation_layout: Vec<String>,
    pub privileged_layout: Vec<String>,
    pub state: Option<TrainerState>,
}

pub type TrainCheckpoint = Checkpoint<TrainerHeader>;

/// How one iteration acts and learns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationPlan {
    pub rollout_alpha: f32,
    pub update: UpdatePlan,
}

pub fn agent_shape(cfg: &RunConfig) -> AgentShape {
    let settings = env_settings(cfg);
    AgentShape {
        priv_dim: settings.priv_dim(),
        with_student: cfg.variant.is_student(),
    }
}

/// Env settings implied by a run config (training protocol).
pub fn env_settings(cfg: &RunConfig) -> EnvSettings {
    EnvSettings {
        env: cfg.env.clone(),
        robot: cfg.robot.clone(),
        contact: cfg.contact.clone(),
        fault: cfg.effective_fault(),
        fault_mode: if cfg.variant.failure_env() {
            cfg.fault_mode
        } else {
            FaultMode::None
        },
        with_flag: cfg.variant.uses_failure_flag(),
        run_seed: cfg.seed,
        post_fault_horizon: None,
        trace: false,
    }
}

/// Fusion and loss weights at progress `p`.
pub fn iteration_plan(cfg: &RunConfig, p: f64) -> IterationPlan {
    let v = cfg.variant;
    if !v.is_student() {
        return IterationPlan {
            rollout_alpha: 0.0,
            update: UpdatePlan {
                alpha: 0.0,
                beta: 0.0,
                adaption_only: false,
            },
        };
    }
    if v.is_supervised_stages() {
        let second = p >= TAKEOVER;
        let alpha = if second { 1.0 } else { 0.0 };
        return IterationPlan {
            rollout_alpha: alpha,
            update: UpdatePlan {
                alpha,
                beta: 0.0,
                adaption_only: second,
            },
        };
    }
    let alpha = cfg.schedule.alpha(p) as f32;
    IterationPlan {
        rollout_alpha: alpha,
        update: UpdatePlan {
            alpha,
            beta: cfg.schedule.beta(p) as f32,
            adaption_only: false,
        },
    }
}

/// Fusion ratio a trained agent of this variant is deployed with.
pub fn deployment_alpha(variant: AgentVariant) -> f32 {
    if variant.is_student() {
        1.0
    } else {
        0.0
    }
}

/// Normalized network inputs for the current state of each env.
pub fn gather_inputs<'a, I>(agent: &Agent, envs: I, with_history: bool) -> AgentInputs
where
    I: IntoIterator<Item = &'a Env>,
    I::IntoIter: ExactSizeIterator,
{
    let envs = envs.into_iter();
    let mut x = AgentInputs::with_capacity(envs.len(), agent.shape.priv_dim, with_history);
    for env in envs {
        let obs = agent.normalize_obs(env.observation());
        let e = agent.normalize_privileged(&env.privileged());
        let h = with_history.then(|| agent.normalize_history(env.history().iter()));
        x.push(&obs, &e, h.as_deref());
    }
    x
}

/// Log-density with the same operation order as the graph op.
fn log_prob(mean: &[f32], log_std: &[f32], action: &[f32]) -> f32 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&m, &ls), &a)| {
            let ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
            let z = (a - m) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

/// `DIR` for a checkpoint stored as `DIR/checkpoints/<file>`.
fn run_dir_of(checkpoint: &Path) -> Option<PathBuf> {
    let parent = checkpoint.parent()?;
    (parent.file_name()? == CHECKPOINT_DIR).then(|| parent.parent().map(Path::to_path_buf))?
}

/// PPO training loop with joint teacher-student optimization.
pub struct Trainer {
    pub cfg: RunConfig,
    pub agent: Agent,
    opt: Adam,
    envs: VecEnv,
    rng: Rng,
    iteration: u64,
    steps: u64,
    recent: VecDeque<(f64, f64)>,
    metrics: Vec<IterationMetrics>,
    writer: Option<MetricsWriter>,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let settings = Arc::new(env_settings(&cfg));
        let mut init_rng = rng_for(&[cfg.seed, stream::INIT]);
        let agent = Agent::new(agent_shape(&cfg), &cfg.robot, cfg.ppo.init_log_std as f32, &mut init_rng)?;
        let opt = Adam::new(&agent.store, cfg.ppo.learning_rate as f32);
        let mut envs = VecEnv::new(settings, cfg.num_envs, cfg.terrain, &cfg.terrain_params, cfg.exec);
        envs.stagger_starts();
        let writer = match &cfg.out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                cfg.write_resolved(dir)?;
                let path = dir.join(METRICS_FILE);
                if path.exists() {
                    std::fs::remove_file(&path)?;
                }
                Some(MetricsWriter::append_to(&path)?)
            }
            None => None,
        };
        Ok(Self {
            rng: rng_for(&[cfg.seed, stream::TRAINER]),
            cfg,
            agent,
            opt,
            envs,
            iteration: 0,
            steps: 0,
            recent: VecDeque::new(),
            metrics: Vec::new(),
            writer,
        })
    }

    /// Continues a run from `path`. When `expected` is given its hash must
    /// match the checkpoint's. Logs go to `out_dir`, or to the run directory
    /// holding the checkpoint when it sits in one.
    pub fn resume(path: &Path, expected: Option<&RunConfig>, out_dir: Option<PathBuf>) -> Result<Self, TrainError> {
        let ck = TrainCheckpoint::load(path)?;
        let mut cfg = ck.header.config.clone();
        let found = cfg.hash();
        if hash_bytes(&found) != ck.config_hash {
            return Err(CheckpointError::Integrity.into());
        }
        if let Some(exp) = expected {
            if exp.hash() != found {
                return Err(CheckpointError::ConfigMismatch {
                    found,
                    expected: exp.hash(),
                }
                .into());
            }
        }
        cfg.out_dir = out_dir.or_else(|| run_dir_of(path));
        let state = ck
            .header
            .state
            .ok_or_else(|| CheckpointError::Malformed("checkpoint has no trainer state".into()))?;
        let agent = Agent::from_store(ck.params, agent_shape(&cfg), &cfg.robot)?;
        let mut opt = Adam::new(&agent.store, state.learning_rate);
        opt.step = state.adam_step;
        if let Some((m, v)) = ck.moments {
            opt.set_moments(m, v);
        }
        let settings = Arc::new(env_settings(&cfg));
        let envs = VecEnv {
            envs: state
                .envs
                .into_iter()
                .map(|s| Env::from_snapshot(Arc::clone(&settings), s))
                .collect(),
            mode: cfg.exec,
        };
        if envs.len() != cfg.num_envs {
            return Err(CheckpointError::Malformed("env count differs from config".into()).into());
        }
        let writer = match &cfg.out_dir {
            Some(dir) => {
                let path = dir.join(METRICS_FILE);
                crate::metrics::truncate_metrics(&path, ck.header.iteration)?;
                Some(MetricsWriter::append_to(&path)?)
            }
            None => None,
        };
        Ok(Self {
            cfg,
            agent,
            opt,
            envs,
            rng: state.rng,
            iteration: ck.header.iteration,
            steps: ck.header.steps,
            recent: state.recent_episodes,
            metrics: Vec::new(),
            writer,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn progress(&self) -> f64 {
        (self.steps as f64 / self.cfg.total_steps as f64).min(1.0)
    }

    pub fn is_done(&self) -> bool {
        self.steps >= self.cfg.total_steps
    }

    /// Metrics of the iterations run by this instance.
    pub fn metrics(&self) -> &[IterationMetrics] {
        &self.metrics
    }

    pub fn envs(&self) -> &VecEnv {
        &self.envs
    }

    pub fn checkpoint(&self) -> TrainCheckpoint {
        let (m, v) = self.opt.moments();
        Checkpoint {
            config_hash: hash_bytes(&self.cfg.hash()),
            progress: self.progress(),
            header: TrainerHeader {
                config: RunConfig {
                    out_dir: None,
                    ..self.cfg.clone()
                },
                iteration: self.iteration,
                steps: self.steps,
                observation_layout: observation_layout(),
                privileged_layout: privileged_layout(self.cfg.variant.uses_failure_flag()),
                state: Some(TrainerState {
                    rng: self.rng.clone(),
                    envs: self.envs.envs.iter().map(Env::snapshot).collect(),
                    recent_episodes: self.recent.clone(),
                    adam_step: self.opt.step,
                    learning_rate: self.opt.lr,
                }),
            },
            params: self.agent.store.clone(),
            moments: Some((m.to_vec(), v.to_vec())),
        }
    }

    /// Writes `ckpt_<iteration>.qfck` and `latest.qfck` under the output
    /// directory, if any. Returns the iteration-stamped path.
    pub fn save_checkpoint(&self) -> Result<Option<PathBuf>, TrainError> {
        let Some(dir) = &self.cfg.out_dir else {
            return Ok(None);
        };
        let dir = dir.join(CHECKPOINT_DIR);
        let ck = self.checkpoint();
        let path = dir.join(format!("ckpt_{:06}.qfck", self.iteration));
        ck.save(&path)?;
        ck.save(&dir.join(LATEST_CHECKPOINT))?;
        Ok(Some(path))
    }

    fn debug_dir(&self) -> PathBuf {
        self.cfg.out_dir.clone().unwrap_or_else(std::env::temp_dir)
    }

    /// Collects one rollout and runs one update.
    pub fn iterate(&mut self) -> Result<IterationMetrics, TrainError> {
        let p = self.progress();
        let plan = iteration_plan(&self.cfg, p);
        let horizon = self.cfg.ppo.horizon;
        let n = self.envs.len();
        let with_history = self.agent.shape.with_student;
        let gamma = self.cfg.ppo.gamma;
        let scale = self.cfg.ppo.reward_scale;
        let dt = self.cfg.env.control_dt;

        let mut inputs = AgentInputs::with_capacity(horizon * n, self.agent.shape.priv_dim, with_history);
        let mut actions = Vec::with_capacity(horizon * n * ACTION_DIM);
        let mut means = Vec::with_capacity(horizon * n * ACTION_DIM);
        let mut log_probs = Vec::with_capacity(horizon * n);
        let mut values = Vec::with_capacity(horizon * n);
        let mut rewards = Vec::with_capacity(horizon * n);
        let mut dones = Vec::with_capacity(horizon * n);
        let mut terms = RewardTerms::default();
        let mut raw_reward = 0.0;
        let mut fwd = 0.0;
        let mut finished = 0u64;
        let mut finished_len = 0.0;
        let mut terminations = 0u64;
        let log_std = self.agent.log_std();

        for _ in 0..horizon {
            let x = gather_inputs(&self.agent, &self.envs.envs, with_history);
            let (mean, value, _) = self.agent.act(&x, plan.rollout_alpha, self.cfg.exec)?;
            let mut batch_actions: Vec<Action> = Vec::with_capacity(n);
            for i in 0..n {
                let m = &mean[i * ACTION_DIM..(i + 1) * ACTION_DIM];
                let a = Agent::sample_action(m, &log_std, &mut self.rng);
                log_probs.push(log_prob(m, &log_std, &a));
                batch_actions.push(std::array::from_fn(|j| a[j] as f64));
                actions.extend_from_slice(&a);
            }
            means.extend_from_slice(&mean);
            let steps = self.envs.step(&batch_actions)?;
            for (i, s) in steps.iter().enumerate() {
                let r = &s.result;
                let mut reward = r.reward * scale;
                if r.truncated {
                    reward += gamma * value[i] as f64;
                }
                rewards.push(reward);
                dones.push(r.done());
                values.push(value[i] as f64);
                raw_reward += r.reward;
                fwd += r.info.body_vel[0];
                terms.add_assign(&r.info.terms);
                if r.terminated {
                    terminations += 1;
                }
                if let (Some(ret), Some(len)) = (s.episode_return, s.episode_length) {
                    let secs = len as f64 * dt;
                    finished += 1;
                    finished_len += secs;
                    self.recent.push_back((ret, secs));
                    if self.recent.len() > EPISODE_WINDOW {
                        self.recent.pop_front();
                    }
                }
            }
            inputs.obs.extend_from_slice(&x.obs);
            inputs.privileged.extend_from_slice(&x.privileged);
            inputs.history.extend_from_slice(&x.history);
            inputs.n += n;
        }

        let x = gather_inputs(&self.agent, &self.envs.envs, false);
        let bootstrap: Vec<f64> = if plan.update.adaption_only {
            vec![0.0; n]
        } else {
            let alpha = if with_history { plan.rollout_alpha } else { 0.0 };
            let x = if alpha > 0.0 {
                gather_inputs(&self.agent, &self.envs.envs, true)
            } else {
                x
            };
            let (_, v, _) = self.agent.act(&x, alpha, self.cfg.exec)?;
            v.iter().map(|&v| v as f64).collect()
        };
        let (mut adv, ret) = gae_batched(&rewards, &values, &dones, &bootstrap, gamma, self.cfg.ppo.lambda);
        if self.cfg.ppo.normalize_advantages {
            normalize(&mut adv);
        }
        let batch = PpoBatch {
            inputs,
            actions,
            old_log_prob: log_probs,
            old_mean: means,
            old_log_std: log_std,
            advantages: adv.iter().map(|&a| a as f32).collect(),
            returns: ret.iter().map(|&r| r as f32).collect(),
        };
        let debug_dir = self.debug_dir();
        let loss = ppo_update(
            &mut self.agent,
            &mut self.opt,
            &batch,
            plan.update,
            &self.cfg.ppo,
            &mut self.rng,
            self.cfg.exec,
            &debug_dir,
        )?;

        let total = (horizon * n) as f64;
        let reward_terms: IndexMap<String, f64> = RewardTerms::NAMES
            .iter()
            .zip(terms.to_array())
            .map(|(k, v)| (k.to_string(), v / total))
            .collect();
        let window = self.recent.len() as f64;
        let m = IterationMetrics {
            iteration: self.iteration,
            steps: self.steps,
            progress: p,
            alpha: plan.update.alpha as f64,
            beta: loss.beta,
            mean_episode_reward: (window > 0.0).then(|| self.recent.iter().map(|e| e.0).sum::<f64>() / window),
            mean_episode_length: (window > 0.0).then(|| self.recent.iter().map(|e| e.1).sum::<f64>() / window),
            episodes_finished: finished,
            finished_length_sum: finished_len,
            terminations,
            step_reward: raw_reward / total,
            forward_velocity: fwd / total,
            reward_terms,
            loss,
        };
        self.iteration += 1;
        self.steps += (horizon * n) as u64;
        if let Some(w) = &mut self.writer {
            w.write(&m)?;
        }
        self.metrics.push(m.clone());
        Ok(m)
    }

    /// Runs until the step budget is spent or `max_iterations` more
    /// iterations have run, checkpointing every `checkpoint_every` iterations
    /// and at the end.
    pub fn run(&mut self, max_iterations: Option<u64>) -> Result<(), TrainError> {
        let stop = max_iterations.map(|k| self.iteration + k);
        while !self.is_done() && stop.is_none_or(|s| self.iteration < s) {
            self.iterate()?;
            let every = self.cfg.checkpoint_every as u64;
            if every > 0 && self.iteration % every == 0 {
                self.save_checkpoint()?;
            }
        }
        self.save_checkpoint()?;
        Ok(())
    }
}

/// Trains a fresh agent for the configured budget.
pub fn train(cfg: RunConfig) -> Result<Trainer, TrainError> {
    let mut t = Trainer::new(cfg)?;
    t.run(None)?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plans_per_variant() {
        let mut cfg = RunConfig::default();
        cfg.variant = AgentVariant::BaseTeacher;
        assert_eq!(iteration_plan(&cfg, 0.7).update.alpha, 0.0);
        cfg.variant = AgentVariant::FailureStudentSs;
        assert!(!iteration_plan(&cfg, 0.49).update.adaption_only);
        let late = iteration_plan(&cfg, 0.5);
        assert!(late.update.adaption_only && late.rollout_alpha == 1.0);
        cfg.variant = AgentVariant::FailureStudentJt;
        let mid = iteration_plan(&cfg, 0.3);
        assert!((mid.update.alpha - 0.5).abs() < 1e-6 && (mid.update.beta - 0.55).abs() < 1e-6);
    }

    #[test]
    fn log_prob_matches_head() {
        let mean = [0.1f32, -0.3, 0.7];
        let ls = [-1.0f32, 0.2, -0.5];
        let a = [0.0f32, 0.1, 0.9];
        let head = crate::nn::GaussianPolicyHead::new(
            crate::nn::Tensor::vector(mean.to_vec()),
            crate::nn::Tensor::vector(ls.to_vec()),
        )
        .unwrap();
        assert_eq!(log_prob(&mean, &ls, &a), head.log_prob(&a).unwrap());
    }
}
