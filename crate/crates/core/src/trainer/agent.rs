//! Teacher encoder μ, student encoder φ and the shared policy π.

use rand::SeedableRng as _;

use crate::dynamics::RobotModel;
use crate::env::{Observation, ACTION_DIM, DR_DIM, FLAG_DIM, HISTORY_LEN, OBS_DIM, STATE_DIM};
use crate::exec::ExecMode;
use crate::nn::{
    ConvLayerSpec, ConvStackSpec, GaussianPolicyHead, Graph, MlpSpec, NnError, ParamStore, Result, Tensor, Var,
};
use crate::terrain::MAP_LEN;

pub const LATENT_DIM: usize = 8;
pub const POLICY_INPUT: usize = LATENT_DIM + OBS_DIM;
pub const TEACHER_HIDDEN: [usize; 3] = [512, 256, 128];
pub const POLICY_HIDDEN: [usize; 2] = [256, 128];

pub const TEACHER_PREFIX: &str = "teacher";
pub const STUDENT_PREFIX: &str = "student";
pub const LOG_STD_NAME: &str = "policy.log_std";

const DQ_SCALE: f64 = 0.05;
const LIN_VEL_SCALE: f64 = 2.0;
const ANG_VEL_SCALE: f64 = 0.25;
const HEIGHT_OFFSET: f64 = 0.3;
const HEIGHT_SCALE: f64 = 5.0;

/// Which parameter groups an [`Agent`] holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AgentShape {
    pub priv_dim: usize,
    pub with_student: bool,
}

/// Network inputs for a batch of `n` samples, already normalized.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AgentInputs {
    pub n: usize,
    pub obs: Vec<f32>,
    pub privileged: Vec<f32>,
    /// `n × HISTORY_LEN × OBS_DIM`, oldest frame first per sample.
    pub history: Vec<f32>,
}

impl AgentInputs {
    pub fn with_capacity(n: usize, priv_dim: usize, with_history: bool) -> Self {
        Self {
            n: 0,
            obs: Vec::with_capacity(n * OBS_DIM),
            privileged: Vec::with_capacity(n * priv_dim),
            history: Vec::with_capacity(if with_history { n * HISTORY_LEN * OBS_DIM } else { 0 }),
        }
    }

    pub fn push(&mut self, obs: &[f32], privileged: &[f32], history: Option<&[f32]>) {
        self.obs.extend_from_slice(obs);
        self.privileged.extend_from_slice(privileged);
        if let Some(h) = history {
            self.history.extend_from_slice(h);
        }
        self.n += 1;
    }

    /// Rows `idx` gathered into a new batch.
    pub fn gather(&self, idx: &[usize]) -> Self {
        let pd = if self.n > 0 { self.privileged.len() / self.n } else { 0 };
        let hd = if self.n > 0 { self.history.len() / self.n } else { 0 };
        let mut out = Self::with_capacity(idx.len(), pd, hd > 0);
        for &i in idx {
            out.push(
                &self.obs[i * OBS_DIM..(i + 1) * OBS_DIM],
                &self.privileged[i * pd..(i + 1) * pd],
                (hd > 0).then(|| &self.history[i * hd..(i + 1) * hd]),
            );
        }
        out
    }
}

/// Graph handles of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct AgentOutput {
    pub mean: Var,
    pub value: Var,
    pub log_std: Var,
    pub z: Option<Var>,
    pub z_hat: Option<Var>,
}

/// Parameters and architecture of the full agent.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub store: ParamStore,
    pub shape: AgentShape,
    q_default: [f64; 12],
}

impl Agent {
    pub fn teacher_spec(priv_dim: usize) -> MlpSpec {
        let mut sizes = vec![priv_dim];
        sizes.extend(TEACHER_HIDDEN);
        sizes.push(LATENT_DIM);
        MlpSpec::new(TEACHER_PREFIX, sizes)
    }

    pub fn student_spec() -> ConvStackSpec {
        ConvStackSpec {
            prefix: STUDENT_PREFIX.into(),
            in_channels: OBS_DIM,
            time_len: HISTORY_LEN,
            layers: vec![
                ConvLayerSpec {
                    out_channels: 32,
                    kernel: 8,
                    stride: 4,
                },
                ConvLayerSpec {
                    out_channels: 32,
                    kernel: 5,
                    stride: 1,
                },
                ConvLayerSpec {
                    out_channels: 32,
                    kernel: 5,
                    stride: 1,
                },
            ],
            latent_dim: LATENT_DIM,
        }
    }

    pub fn trunk_spec() -> MlpSpec {
        let mut sizes = vec![POLICY_INPUT];
        sizes.extend(POLICY_HIDDEN);
        MlpSpec::trunk("policy.trunk", sizes)
    }

    pub fn mean_spec() -> MlpSpec {
        MlpSpec::new("policy.mean", vec![POLICY_HIDDEN[1], ACTION_DIM])
    }

    pub fn value_spec() -> MlpSpec {
        MlpSpec::new("policy.value", vec![POLICY_HIDDEN[1], 1])
    }

    /// Fresh parameters: orthogonal weights, zero biases, `log_std` filled
    /// with `init_log_std`.
    pub fn new<R: rand::Rng + ?Sized>(
        shape: AgentShape,
        model: &RobotModel,
        init_log_std: f32,
        rng: &mut R,
    ) -> Result<Self> {
        let hidden = std::f32::consts::SQRT_2;
        let mut store = ParamStore::new();
        Self::teacher_spec(shape.priv_dim).register(&mut store, rng, hidden, 1.0)?;
        if shape.with_student {
            Self::student_spec().register(&mut store, rng, hidden, 1.0)?;
        }
        Self::trunk_spec().register(&mut store, rng, hidden, hidden)?;
        Self::mean_spec().register(&mut store, rng, hidden, 0.01)?;
        Self::value_spec().register(&mut store, rng, hidden, 1.0)?;
        store.insert(LOG_STD_NAME, Tensor::filled(vec![ACTION_DIM], init_log_std))?;
        Ok(Self {
            store,
            shape,
            q_default: model.q_default(),
        })
    }

    /// Wraps a loaded parameter store, checking that every expected
    /// parameter is present with the right size.
    pub fn from_store(store: ParamStore, shape: AgentShape, model: &RobotModel) -> Result<Self> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let reference = Self::new(shape, model, 0.0, &mut rng)?;
        if reference.store.len() != store.len() {
            return Err(NnError::Dimension {
                layer: "parameter count".into(),
                expected: reference.store.len(),
                actual: store.len(),
            });
        }
        for (name, t) in reference.store.iter() {
            let got = store.get(name).ok_or_else(|| NnError::UnknownParam(name.into()))?;
            if got.shape() != t.shape() {
                return Err(NnError::Shape {
                    op: "load parameter",
                    lhs: t.shape().to_vec(),
                    rhs: got.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            store,
            shape,
            q_default: model.q_default(),
        })
    }

    /// True for parameters belonging to the student encoder.
    pub fn student_mask(&self) -> Vec<bool> {
        self.store
            .names()
            .map(|n| n.starts_with(&format!("{STUDENT_PREFIX}.")))
            .collect()
    }

    /// Scaled observation: joint angles relative to the default pose,
    /// damped joint velocities, everything else unchanged.
    pub fn normalize_obs(&self, o: &Observation) -> [f32; OBS_DIM] {
        std::array::from_fn(|k| {
            let v = if k < 12 {
                o[k] - self.q_default[k]
            } else if k < 24 {
                o[k] * DQ_SCALE
            } else {
                o[k]
            };
            v as f32
        })
    }

    /// Scaled privileged vector, centered around nominal randomization values.
    pub fn normalize_privileged(&self, e: &[f64]) -> Vec<f32> {
        const NOMINAL: [f64; 4] = [0.8, 1.0, 1.0, 1.0];
        e.iter()
            .enumerate()
            .map(|(k, &v)| {
                let x = if k < 4 {
                    v - NOMINAL[k]
                } else if k < DR_DIM {
                    (v - 0.9) * 10.0
                } else if k < DR_DIM + 3 {
                    v * LIN_VEL_SCALE
                } else if k < DR_DIM + STATE_DIM {
                    v * ANG_VEL_SCALE
                } else if k < DR_DIM + STATE_DIM + MAP_LEN {
                    ((v + HEIGHT_OFFSET) * HEIGHT_SCALE).clamp(-5.0, 5.0)
                } else {
                    debug_assert!(k < DR_DIM + STATE_DIM + MAP_LEN + FLAG_DIM);
                    v
                };
                x as f32
            })
            .collect()
    }

    /// Normalized flattened history, oldest first.
    pub fn normalize_history<'a>(&self, frames: impl Iterator<Item = &'a Observation>) -> Vec<f32> {
        let mut out = Vec::with_capacity(HISTORY_LEN * OBS_DIM);
        for o in frames {
            out.extend_from_slice(&self.normalize_obs(o));
        }
        out
    }

    /// Builds the forward pass for a batch. The student branch is evaluated
    /// when `alpha > 0` or `need_student`; the teacher when `alpha < 1` or
    /// `need_teacher`. At the endpoints the unused encoder never enters the
    /// action path.
    pub fn forward(
        &self,
        g: &mut Graph,
        x: &AgentInputs,
        alpha: f32,
        need_teacher: bool,
        need_student: bool,
    ) -> Result<AgentOutput> {
        let n = x.n;
        let z = if alpha < 1.0 || need_teacher {
            if x.privileged.len() != n * self.shape.priv_dim {
                return Err(NnError::Dimension {
                    layer: "privileged input".into(),
                    expected: self.shape.priv_dim,
                    actual: x.privileged.len() / n.max(1),
                });
            }
            let e = g.input(n, self.shape.priv_dim, x.privileged.clone())?;
            Some(Self::teacher_spec(self.shape.priv_dim).forward(g, e)?)
        } else {
            None
        };
        let z_hat = if alpha > 0.0 || need_student {
            if !self.shape.with_student {
                return Err(NnError::State("agent has no student encoder".into()));
            }
            let h = g.input(n, HISTORY_LEN * OBS_DIM, x.history.clone())?;
            Some(Self::student_spec().forward(g, h)?)
        } else {
            None
        };
        let fused = match (z, z_hat) {
            (Some(z), _) if alpha == 0.0 => z,
            (_, Some(zh)) if alpha == 1.0 => zh,
            (Some(z), Some(zh)) => {
                let a = g.scale(zh, alpha);
                let b = g.scale(z, 1.0 - alpha);
                g.add(a, b)?
            }
            _ => return Err(NnError::State(format!("fusion ratio {alpha} outside [0, 1]"))),
        };
        let o = g.input(n, OBS_DIM, x.obs.clone())?;
        let pin = g.concat(fused, o)?;
        let h = Self::trunk_spec().forward(g, pin)?;
        let mean = Self::mean_spec().forward(g, h)?;
        let value = Self::value_spec().forward(g, h)?;
        let log_std = g.param(LOG_STD_NAME)?;
        Ok(AgentOutput {
            mean,
            value,
            log_std,
            z,
            z_hat,
        })
    }

    /// Batched inference: per-sample action means, values and the shared
    /// log standard deviation.
    pub fn act(&self, x: &AgentInputs, alpha: f32, mode: ExecMode) -> Result<(Vec<f32>, Vec<f32>, Vec<f32>)> {
        let mut g = Graph::with_mode(&self.store, mode);
        let out = self.forward(&mut g, x, alpha, false, false)?;
        Ok((
            g.value(out.mean).to_vec(),
            g.value(out.value).to_vec(),
            g.value(out.log_std).to_vec(),
        ))
    }

    pub fn log_std(&self) -> Vec<f32> {
        self.store.get(LOG_STD_NAME).map(|t| t.data().to_vec()).unwrap_or_default()
    }

    /// `z_t = μ(e_t)` for one normalized privileged vector.
    pub fn teacher_encode(&self, e: &[f32]) -> Result<Vec<f32>> {
        if e.len() != self.shape.priv_dim {
            return Err(NnError::Dimension {
                layer: TEACHER_PREFIX.into(),
                expected: self.shape.priv_dim,
                actual: e.len(),
            });
        }
        let mut g = Graph::new(&self.store);
        let x = g.input(1, e.len(), e.to_vec())?;
        let z = Self::teacher_spec(self.shape.priv_dim).forward(&mut g, x)?;
        Ok(g.value(z).to_vec())
    }

    /// `ẑ_t = φ(o_{t−H:t})` for one normalized, flattened history.
    pub fn student_encode(&self, history: &[f32]) -> Result<Vec<f32>> {
        let mut g = Graph::new(&self.store);
        let x = g.input(1, history.len(), history.to_vec())?;
        let z = Self::student_spec().forward(&mut g, x)?;
        Ok(g.value(z).to_vec())
    }

    /// `π(z', o_t)`: action distribution and value estimate.
    pub fn policy_forward(&self, z: &[f32], obs: &[f32]) -> Result<(GaussianPolicyHead, f32)> {
        if z.len() != LATENT_DIM || obs.len() != OBS_DIM {
            return Err(NnError::Dimension {
                layer: "policy input".into(),
                expected: POLICY_INPUT,
                actual: z.len() + obs.len(),
            });
        }
        let mut g = Graph::new(&self.store);
        let mut input = z.to_vec();
        input.extend_from_slice(obs);
        let x = g.input(1, POLICY_INPUT, input)?;
        let h = Self::trunk_spec().forward(&mut g, x)?;
        let mean = Self::mean_spec().forward(&mut g, h)?;
        let value = Self::value_spec().forward(&mut g, h)?;
        let head = GaussianPolicyHead::new(Tensor::vector(g.value(mean).to_vec()), Tensor::vector(self.log_std()))?;
        Ok((head, g.value(value)[0]))
    }

    /// Gaussian sample around `mean` with the agent's clamped `log_std`.
    pub fn sample_action<R: rand::Rng + ?Sized>(mean: &[f32], log_std: &[f32], rng: &mut R) -> Vec<f32> {
        mean.iter()
            .zip(log_std)
            .map(|(&m, &ls)| {
                let eps: f32 = rng.sample(rand_distr::StandardNormal);
                m + ls.clamp(crate::nn::LOG_STD_MIN, crate::nn::LOG_STD_MAX).exp() * eps
            })
            .collect()
    }

    /// Overwrites every parameter under `prefix` with uniform noise.
    pub fn perturb<R: rand::Rng + ?Sized>(&mut self, prefix: &str, rng: &mut R) {
        let names: Vec<String> = self
            .store
            .names()
            .filter(|n| n.starts_with(&format!("{prefix}.")))
            .map(String::from)
            .collect();
        for n in names {
            if let Some(t) = self.store.get_mut(&n) {
                for v in t.data_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
            }
        }
    }
}
