//! Run configuration: one TOML file, every field optional, unknown keys rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::{ContactParams, RobotModel};
use crate::env::EnvConfig;
use crate::exec::ExecMode;
use crate::fault::{FaultConfig, FaultMode};
use crate::terrain::{TerrainParams, TerrainSelect};
use crate::trainer::{PpoConfig, ScheduleConfig};

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config value for {key}: {constraint}")]
    Invalid { key: String, constraint: String },
}

fn invalid(key: &str, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        constraint: constraint.into(),
    }
}

/// Which agent is trained: environment (BaseEnv without faults, FailureEnv
/// with them), privileged teacher only, or a student distilled by joint
/// training (JT) or two-stage supervised transfer (SS).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentVariant {
    BaseTeacher,
    FailureTeacher,
    FailureTeacherNoFf,
    BaseStudentSs,
    BaseStudentJt,
    FailureStudentSs,
    #[default]
    FailureStudentJt,
}

impl AgentVariant {
    pub const ALL: [AgentVariant; 7] = [
        AgentVariant::BaseTeacher,
        AgentVariant::FailureTeacher,
        AgentVariant::FailureTeacherNoFf,
        AgentVariant::BaseStudentSs,
        AgentVariant::BaseStudentJt,
        AgentVariant::FailureStudentSs,
        AgentVariant::FailureStudentJt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentVariant::BaseTeacher => "base_teacher",
            AgentVariant::FailureTeacher => "failure_teacher",
            AgentVariant::FailureTeacherNoFf => "failure_teacher_no_ff",
            AgentVariant::BaseStudentSs => "base_student_ss",
            AgentVariant::BaseStudentJt => "base_student_jt",
            AgentVariant::FailureStudentSs => "failure_student_ss",
            AgentVariant::FailureStudentJt => "failure_student_jt",
        }
    }

    /// Table label in the usual `Env[S|T][JT|SS]` notation.
    pub fn label(self) -> &'static str {
        match self {
            AgentVariant::BaseTeacher => "BaseEnv[T]",
            AgentVariant::FailureTeacher => "FailureEnv[T]",
            AgentVariant::FailureTeacherNoFf => "FailureEnv[T] w/o FF",
            AgentVariant::BaseStudentSs => "BaseEnv[S][SS]",
            AgentVariant::BaseStudentJt => "BaseEnv[S][JT]",
            AgentVariant::FailureStudentSs => "FailureEnv[S][SS]",
            AgentVariant::FailureStudentJt => "FailureEnv[S][JT]",
        }
    }

    pub fn failure_env(self) -> bool {
        matches!(
            self,
            AgentVariant::FailureTeacher
                | AgentVariant::FailureTeacherNoFf
                | AgentVariant::FailureStudentSs
                | AgentVariant::FailureStudentJt
        )
    }

    /// Whether the privileged info carries the failure flag.
    pub fn uses_failure_flag(self) -> bool {
        self != AgentVariant::FailureTeacherNoFf
    }

    pub fn is_student(self) -> bool {
        matches!(
            self,
            AgentVariant::BaseStudentSs
                | AgentVariant::BaseStudentJt
                | AgentVariant::FailureStudentSs
                | AgentVariant::FailureStudentJt
        )
    }

    pub fn is_supervised_stages(self) -> bool {
        matches!(self, AgentVariant::BaseStudentSs | AgentVariant::FailureStudentSs)
    }
}

impl std::str::FromStr for AgentVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        AgentVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown agent variant '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub variant: AgentVariant,
    pub seed: u64,
    pub num_envs: usize,
    /// Total environment steps (ticks summed over envs).
    pub total_steps: u64,
    /// Save a checkpoint every this many iterations (0 = only at the end).
    pub checkpoint_every: usize,
    pub exec: ExecMode,
    pub terrain: TerrainSelect,
    pub terrain_params: TerrainParams,
    pub env: EnvConfig,
    /// Fault parameters; faults are only active for FailureEnv variants.
    pub fault: FaultConfig,
    /// Locking model used in FailureEnv training episodes.
    pub fault_mode: FaultMode,
    pub robot: RobotModel,
    /// Contact constants; the friction coefficient is overridden per episode by DR.
    pub contact: ContactParams,
    pub ppo: PpoConfig,
    pub schedule: ScheduleConfig,
    /// Output directory; excluded from the config hash.
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: AgentVariant::default(),
            seed: 0,
            num_envs: 64,
            total_steps: 5_000_000,
            checkpoint_every: 50,
            exec: ExecMode::default(),
            terrain: TerrainSelect::default(),
            terrain_params: TerrainParams::default(),
            env: EnvConfig::default(),
            fault: FaultConfig::default(),
            fault_mode: FaultMode::default(),
            robot: RobotModel::default(),
            contact: ContactParams::default(),
            ppo: PpoConfig::default(),
            schedule: ScheduleConfig::default(),
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    /// Fault configuration with `enabled` resolved against the variant.
    pub fn effective_fault(&self) -> FaultConfig {
        FaultConfig {
            enabled: self.fault.enabled && self.variant.failure_env(),
            ..self.fault.clone()
        }
    }

    /// Steps collected per iteration.
    pub fn batch_size(&self) -> usize {
        self.num_envs * self.ppo.horizon
    }

    pub fn num_iterations(&self) -> usize {
        (self.total_steps as usize).div_ceil(self.batch_size().max(1))
    }

    /// Hex SHA-256 over the canonical JSON encoding, ignoring `out_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex(&Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_envs == 0 {
            return Err(invalid("num_envs", "must be at least 1"));
        }
        if self.total_steps == 0 {
            return Err(invalid("total_steps", "must be positive"));
        }
        let episode_s = self.env.episode_ticks as f64 * self.env.control_dt;
        if !(self.fault.t_min > 0.0 && self.fault.t_min < self.fault.t_max) {
            return Err(invalid(
                "fault.t_min, fault.t_max",
                format!("need 0 < t_min < t_max, got t_min = {} and t_max = {}", self.fault.t_min, self.fault.t_max),
            ));
        }
        if self.fault.t_max >= episode_s {
            return Err(invalid(
                "fault.t_max",
                format!("must be below the episode length {episode_s} s, got {}", self.fault.t_max),
            ));
        }
        if !(self.fault.theta_max > 0.0) {
            return Err(invalid("fault.theta_max", "must be positive"));
        }
        self.robot
            .validate()
            .map_err(|e| invalid("robot", e.to_string()))?;
        let c = &self.contact;
        if !(c.k_n > 0.0 && c.c_n >= 0.0 && c.k_t >= 0.0 && c.mu > 0.0) {
            return Err(invalid("contact", "k_n and mu must be positive, c_n and k_t non-negative"));
        }
        let tp = &self.terrain_params;
        if [tp.max_slope, tp.max_roughness, tp.max_step].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("terrain_params", "magnitudes must be finite and non-negative"));
        }
        self.env.validate().map_err(|(k, c)| invalid(&format!("env.{k}"), c))?;
        self.ppo.validate().map_err(|(k, c)| invalid(&format!("ppo.{k}"), c))?;
        if self.ppo.num_minibatches > self.batch_size() {
            return Err(invalid(
                "ppo.num_minibatches",
                format!("must not exceed num_envs × horizon = {}", self.batch_size()),
            ));
        }
        self.schedule
            .validate()
            .map_err(|(k, c)| invalid(&format!("schedule.{k}"), c))?;
        Ok(())
    }

    /// Writes the fully resolved config into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        fs::write(&path, self.to_toml_string())?;
        Ok(path)
    }
}

/// Reads, merges defaults into and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::from_toml_str(&text)
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
