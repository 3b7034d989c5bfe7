use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::env::ACTION_DIM;
use crate::exec::ExecMode;
use crate::nn::{Adam, Graph, ParamStore, LOG_STD_MAX, LOG_STD_MIN};
use crate::rng::Rng;

use super::agent::{Agent, AgentInputs, LATENT_DIM};
use super::TrainError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub num_minibatches: usize,
    pub learning_rate: f64,
    /// KL target of the adaptive learning rate; `None` keeps it fixed.
    pub desired_kl: Option<f64>,
    pub lr_min: f64,
    pub lr_max: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    /// Rollout length in control ticks per env.
    pub horizon: usize,
    /// Multiplier applied to env rewards before GAE.
    pub reward_scale: f64,
    pub init_log_std: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 5,
            num_minibatches: 4,
            learning_rate: 3e-4,
            desired_kl: Some(0.01),
            lr_min: 1e-5,
            lr_max: 1e-2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 1.0,
            horizon: 24,
            reward_scale: 0.02,
            init_log_std: -1.0,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), (String, String)> {
        let unit = |k: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err((k.to_string(), format!("must lie in [0, 1], got {v}")))
            }
        };
        unit("gamma", self.gamma)?;
        unit("lambda", self.lambda)?;
        if !(self.clip > 0.0) {
            return Err(("clip".into(), "must be positive".into()));
        }
        if self.epochs == 0 || self.num_minibatches == 0 || self.horizon == 0 {
            return Err(("epochs, num_minibatches, horizon".into(), "must be at least 1".into()));
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.learning_rate && self.learning_rate <= self.lr_max) {
            return Err((
                "learning_rate".into(),
                format!("need 0 < lr_min <= learning_rate <= lr_max, got {}", self.learning_rate),
            ));
        }
        if self.desired_kl.is_some_and(|k| !(k > 0.0)) {
            return Err(("desired_kl".into(), "must be positive".into()));
        }
        for (k, v) in [
            ("entropy_coef", self.entropy_coef),
            ("value_coef", self.value_coef),
            ("max_grad_norm", self.max_grad_norm),
            ("reward_scale", self.reward_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err((k.into(), format!("must be finite and non-negative, got {v}")));
            }
        }
        if !(LOG_STD_MIN as f64..=LOG_STD_MAX as f64).contains(&self.init_log_std) {
            return Err((
                "init_log_std".into(),
                format!("must lie in [{LOG_STD_MIN}, {LOG_STD_MAX}], got {}", self.init_log_std),
            ));
        }
        Ok(())
    }
}

/// One on-policy batch, flattened, with advantages already computed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PpoBatch {
    pub inputs: AgentInputs,
    pub actions: Vec<f32>,
    pub old_log_prob: Vec<f32>,
    pub old_mean: Vec<f32>,
    pub old_log_std: Vec<f32>,
    pub advantages: Vec<f32>,
    pub returns: Vec<f32>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.inputs.n
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.n == 0
    }

    pub fn gather(&self, idx: &[usize]) -> Self {
        let rows = |v: &[f32], w: usize| idx.iter().flat_map(|&i| v[i * w..(i + 1) * w].iter().copied()).collect();
        Self {
            inputs: self.inputs.gather(idx),
            actions: rows(&self.actions, ACTION_DIM),
            old_log_prob: rows(&self.old_log_prob, 1),
            old_mean: rows(&self.old_mean, ACTION_DIM),
            old_log_std: self.old_log_std.clone(),
            advantages: rows(&self.advantages, 1),
            returns: rows(&self.returns, 1),
        }
    }
}

/// What an update optimizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdatePlan {
    pub alpha: f32,
    pub beta: f32,
    /// Only `L_adaption` is minimized and only the student moves.
    pub adaption_only: bool,
}

/// Averages over all minibatch steps of one update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub surrogate: f64,
    pub value: f64,
    pub entropy: f64,
    pub l_rl: f64,
    pub adaption: f64,
    pub beta: f64,
    pub total: f64,
    pub grad_norm: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub learning_rate: f64,
}

/// Scalar parts of one minibatch loss, as computed in the graph.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub surrogate: f32,
    pub value: f32,
    pub entropy: f32,
    pub l_rl: f32,
    pub adaption: f32,
    pub total: f32,
    pub clip_fraction: f32,
}

/// `mean_b ‖z_b − ẑ_b‖²` with `z` treated as a constant target.
pub fn adaption_loss(z: &[f32], z_hat: &[f32]) -> f32 {
    assert_eq!(z.len(), z_hat.len(), "latent batches differ in size");
    let n = z.len() / LATENT_DIM;
    let s: f64 = z
        .iter()
        .zip(z_hat)
        .map(|(&a, &b)| ((a - b) as f64).powi(2))
        .sum();
    (s / n.max(1) as f64) as f32
}

/// Loss graph handles of one minibatch.
#[derive(Clone, Copy, Debug)]
pub struct MinibatchLoss {
    pub loss: crate::nn::Var,
    pub parts: LossParts,
    /// Action means, absent in adaptation-only updates.
    pub mean: Option<crate::nn::Var>,
}

/// Builds the full loss graph for one minibatch.
pub fn minibatch_loss(
    agent: &Agent,
    g: &mut Graph,
    mb: &PpoBatch,
    plan: UpdatePlan,
    cfg: &PpoConfig,
) -> Result<MinibatchLoss, crate::nn::NnError> {
    let n = mb.len();
    let need_adapt = plan.adaption_only || plan.beta > 0.0;
    let out = agent.forward(g, &mb.inputs, plan.alpha, need_adapt, need_adapt)?;
    let scalar = |g: &Graph, v| g.value(v)[0];

    let adapt = if need_adapt {
        let (z, zh) = (out.z.expect("teacher evaluated"), out.z_hat.expect("student evaluated"));
        let target = g.detach(z);
        let d = g.sub(target, zh)?;
        let sq = g.square(d);
        let per = g.row_sum(sq);
        Some(g.mean(per))
    } else {
        None
    };

    if plan.adaption_only {
        let a = adapt.expect("adaptation loss built");
        let v = scalar(g, a);
        let parts = LossParts {
            adaption: v,
            total: v,
            ..LossParts::default()
        };
        return Ok(MinibatchLoss {
            loss: a,
            parts,
            mean: None,
        });
    }

    let logp = g.gaussian_log_prob(out.mean, out.log_std, mb.actions.clone())?;
    let old = g.input(n, 1, mb.old_log_prob.clone())?;
    let diff = g.sub(logp, old)?;
    let ratio = g.exp(diff);
    let adv = g.input(n, 1, mb.advantages.clone())?;
    let s1 = g.mul(ratio, adv)?;
    let clipped = g.clamp(ratio, 1.0 - cfg.clip as f32, 1.0 + cfg.clip as f32);
    let s2 = g.mul(clipped, adv)?;
    let smin = g.min(s1, s2)?;
    let surr_mean = g.mean(smin);
    let surrogate = g.scale(surr_mean, -1.0);

    let ret = g.input(n, 1, mb.returns.clone())?;
    let verr = g.sub(out.value, ret)?;
    let vsq = g.square(verr);
    let value_loss = g.mean(vsq);
    let entropy = g.gaussian_entropy(out.log_std);

    let v_term = g.scale(value_loss, cfg.value_coef as f32);
    let e_term = g.scale(entropy, -(cfg.entropy_coef as f32));
    let l = g.add(surrogate, v_term)?;
    let l_rl = g.add(l, e_term)?;

    let (total, adaption) = match adapt {
        Some(a) => {
            let w = g.scale(a, plan.beta);
            (g.add(l_rl, w)?, scalar(g, a))
        }
        None => (l_rl, 0.0),
    };
    let clip_fraction = g
        .value(ratio)
        .iter()
        .filter(|r| (**r - 1.0).abs() > cfg.clip as f32)
        .count() as f32
        / n.max(1) as f32;
    let parts = LossParts {
        surrogate: scalar(g, surrogate),
        value: scalar(g, value_loss),
        entropy: scalar(g, entropy),
        l_rl: scalar(g, l_rl),
        adaption,
        total: scalar(g, total),
        clip_fraction,
    };
    Ok(MinibatchLoss {
        loss: total,
        parts,
        mean: Some(out.mean),
    })
}

/// Mean over the batch of `KL(old ‖ new)` between diagonal Gaussians.
pub fn mean_kl(old_mean: &[f32], old_log_std: &[f32], new_mean: &[f32], new_log_std: &[f32]) -> f64 {
    let a = old_log_std.len();
    let n = old_mean.len() / a.max(1);
    let clamp = |v: f32| v.clamp(LOG_STD_MIN, LOG_STD_MAX) as f64;
    let mut total = 0.0;
    for b in 0..n {
        for j in 0..a {
            let (s0, s1) = (clamp(old_log_std[j]), clamp(new_log_std[j]));
            let dm = (old_mean[b * a + j] - new_mean[b * a + j]) as f64;
            total += s1 - s0 + ((2.0 * s0).exp() + dm * dm) / (2.0 * (2.0 * s1).exp()) - 0.5;
        }
    }
    total / n.max(1) as f64
}

/// KL-adaptive learning-rate rule.
pub fn adapt_learning_rate(lr: f64, kl: f64, cfg: &PpoConfig) -> f64 {
    match cfg.desired_kl {
        Some(target) if kl > 2.0 * target => (lr / 1.5).max(cfg.lr_min),
        Some(target) if kl < 0.5 * target => (lr * 1.5).min(cfg.lr_max),
        _ => lr,
    }
}

/// Serializes a minibatch that produced a non-finite loss.
fn dump_minibatch(dir: &Path, mb: &PpoBatch, parts: &LossParts) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("nonfinite_minibatch.json");
    let body = serde_json::json!({
        "loss": {
            "surrogate": parts.surrogate, "value": parts.value, "entropy": parts.entropy,
            "adaption": parts.adaption, "total": parts.total,
        },
        "obs": mb.inputs.obs,
        "privileged": mb.inputs.privileged,
        "actions": mb.actions,
        "old_log_prob": mb.old_log_prob,
        "advantages": mb.advantages,
        "returns": mb.returns,
    });
    std::fs::write(&path, serde_json::to_vec(&body).unwrap_or_default())?;
    Ok(path)
}

/// `cfg.epochs` passes over shuffled minibatches with one optimizer step
/// each. The learning rate adapts once per call, from the mean KL of the
/// final epoch.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    agent: &mut Agent,
    opt: &mut Adam,
    batch: &PpoBatch,
    plan: UpdatePlan,
    cfg: &PpoConfig,
    rng: &mut Rng,
    mode: ExecMode,
    debug_dir: &Path,
) -> Result<LossReport, TrainError> {
    let n = batch.len();
    let mb_size = n / cfg.num_minibatches;
    let student_only = plan.adaption_only.then(|| agent.student_mask());
    let mut report = LossReport::default();
    let mut steps = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut last_epoch_kl = (0.0, 0usize);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(mb_size.max(1)).take(cfg.num_minibatches) {
            let mb = batch.gather(chunk);
            let (parts, grads, kl) = {
                let mut g = Graph::with_mode(&agent.store, mode);
                let out = minibatch_loss(agent, &mut g, &mb, plan, cfg)?;
                if !out.parts.total.is_finite() {
                    let path = dump_minibatch(debug_dir, &mb, &out.parts)?;
                    return Err(TrainError::NonFiniteLoss { dump: path });
                }
                let kl = out
                    .mean
                    .map(|m| mean_kl(&mb.old_mean, &mb.old_log_std, g.value(m), &agent.log_std()))
                    .unwrap_or(0.0);
                (out.parts, g.backward(out.loss)?, kl)
            };
            agent.store.set_grads(grads)?;
            let gn = clip(&mut agent.store, cfg.max_grad_norm as f32, student_only.as_deref());
            opt.step(&mut agent.store, student_only.as_deref());

            report.surrogate += parts.surrogate as f64;
            report.value += parts.value as f64;
            report.entropy += parts.entropy as f64;
            report.l_rl += parts.l_rl as f64;
            report.adaption += parts.adaption as f64;
            report.total += parts.total as f64;
            report.grad_norm += gn as f64;
            report.kl += kl;
            if epoch + 1 == cfg.epochs {
                last_epoch_kl.0 += kl;
                last_epoch_kl.1 += 1;
            }
            report.clip_fraction += parts.clip_fraction as f64;
            steps += 1;
        }
    }
    if !plan.adaption_only {
        let kl = last_epoch_kl.0 / last_epoch_kl.1.max(1) as f64;
        opt.lr = adapt_learning_rate(opt.lr as f64, kl, cfg) as f32;
    }
    let k = steps.max(1) as f64;
    report.surrogate /= k;
    report.value /= k;
    report.entropy /= k;
    report.l_rl /= k;
    report.adaption /= k;
    report.total /= k;
    report.grad_norm /= k;
    report.kl /= k;
    report.clip_fraction /= k;
    report.beta = if plan.adaption_only { 1.0 } else { plan.beta as f64 };
    report.learning_rate = opt.lr as f64;
    agent.store.zero_grads();
    Ok(report)
}

/// Global-norm clipping restricted to the `mask`ed parameters. Returns the
/// pre-clip norm.
fn clip(store: &mut ParamStore, max_norm: f32, mask: Option<&[bool]>) -> f32 {
    match mask {
        None => store.clip_grad_norm(max_norm),
        Some(m) => {
            for (i, &keep) in m.iter().enumerate() {
                if !keep {
                    let _ = store.at_mut(i).set_grad(None);
                }
            }
            store.clip_grad_norm(max_norm)
        }
    }
}
