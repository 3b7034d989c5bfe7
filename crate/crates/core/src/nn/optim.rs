use serde::{Deserialize, Serialize};

use super::ParamStore;

/// Adam with bias correction. Moment buffers follow the store's parameter
/// order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub step: u64,
    #[serde(skip)]
    pub(crate) m: Vec<Vec<f32>>,
    #[serde(skip)]
    pub(crate) v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f32) -> Self {
        let zeros = || (0..store.len()).map(|i| vec![0.0; store.at(i).numel()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn moments(&self) -> (&[Vec<f32>], &[Vec<f32>]) {
        (&self.m, &self.v)
    }

    pub fn set_moments(&mut self, m: Vec<Vec<f32>>, v: Vec<Vec<f32>>) {
        self.m = m;
        self.v = v;
    }

    /// One update using the gradients stored on the parameters. When `trainable`
    /// is given, parameters with `false` are left untouched (moments included).
    pub fn step(&mut self, store: &mut ParamStore, trainable: Option<&[bool]>) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..store.len() {
            if trainable.is_some_and(|t| !t[i]) {
                continue;
            }
            let Some(g) = store.at(i).grad().map(<[f32]>::to_vec) else {
                continue;
            };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let p = store.at_mut(i).data_mut();
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                p[j] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}
