//! PPO with a privileged teacher encoder, a history-based student encoder and
//! a scheduled blend of their latents feeding one shared policy.

mod agent;
mod gae;
mod ppo;
mod schedule;
mod train;

use std::path::PathBuf;

use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::config::ConfigError;
use crate::env::EnvError;
use crate::nn::NnError;

pub use agent::{
    Agent, AgentInputs, AgentOutput, AgentShape, LATENT_DIM, LOG_STD_NAME, POLICY_HIDDEN, POLICY_INPUT,
    STUDENT_PREFIX, TEACHER_HIDDEN, TEACHER_PREFIX,
};
pub use gae::{gae, gae_batched, normalize};
pub use ppo::{
    adapt_learning_rate, adaption_loss, mean_kl, minibatch_loss, ppo_update, LossParts, LossReport, MinibatchLoss,
    PpoBatch, PpoConfig, UpdatePlan,
};
pub use schedule::{fuse_latent, ScheduleConfig, TAKEOVER};
pub use train::{
    agent_shape, deployment_alpha, env_settings, gather_inputs, iteration_plan, train, IterationPlan,
    TrainCheckpoint, Trainer, TrainerHeader, TrainerState, CHECKPOINT_DIR, LATEST_CHECKPOINT,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("non-finite loss; offending minibatch written to {}", dump.display())]
    NonFiniteLoss { dump: PathBuf },
}
