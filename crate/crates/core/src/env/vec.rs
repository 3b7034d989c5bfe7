use std::sync::Arc;

use crate::exec::{map_mut, ExecMode};
use crate::rng::{hash_words, stream};
use crate::terrain::{TerrainField, TerrainParams, TerrainSelect};

use super::{Action, Env, EnvError, EnvSettings, Observation, StepResult};

/// Result of one env in a batched step. When the episode ended, the env has
/// already been reset and `final_observation` holds the last observation of
/// the finished episode.
#[derive(Clone, Debug, PartialEq)]
pub struct VecStep {
    pub result: StepResult,
    pub final_observation: Option<Observation>,
    pub episode_return: Option<f64>,
    pub episode_length: Option<u32>,
}

/// A batch of independent envs stepped together.
#[derive(Clone, Debug)]
pub struct VecEnv {
    pub envs: Vec<Env>,
    pub mode: ExecMode,
}

impl VecEnv {
    pub fn new(
        settings: Arc<EnvSettings>,
        num_envs: usize,
        select: TerrainSelect,
        params: &TerrainParams,
        mode: ExecMode,
    ) -> Self {
        let envs = (0..num_envs)
            .map(|i| {
                let terrain = TerrainField::for_env(select, params, settings.run_seed, i);
                Env::new(i, Arc::clone(&settings), terrain)
            })
            .collect();
        Self { envs, mode }
    }

    /// Randomly shortens each env's first episode (seeded).
    pub fn stagger_starts(&mut self) {
        for env in &mut self.envs {
            let len = env.max_ticks();
            let h = hash_words(&[env.settings().run_seed, stream::STAGGER, env.index() as u64]);
            env.stagger((h % len as u64) as u32);
        }
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    /// Steps every env with its action and resets the ones that finished.
    pub fn step(&mut self, actions: &[Action]) -> Result<Vec<VecStep>, EnvError> {
        if actions.len() != self.envs.len() {
            return Err(EnvError::BatchSize {
                expected: self.envs.len(),
                actual: actions.len(),
            });
        }
        map_mut(self.mode, &mut self.envs, |i, env| -> Result<VecStep, EnvError> {
            let result = env.step(&actions[i])?;
            if result.done() {
                let ret = env.episode_return();
                let len = env.tick();
                env.reset();
                Ok(VecStep {
                    final_observation: Some(result.observation),
                    episode_return: Some(ret),
                    episode_length: Some(len),
                    result,
                })
            } else {
                Ok(VecStep {
                    result,
                    final_observation: None,
                    episode_return: None,
                    episode_length: None,
                })
            }
        })
        .into_iter()
        .collect()
    }
}
