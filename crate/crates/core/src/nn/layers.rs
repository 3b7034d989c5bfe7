//! Layer stacks built on [`Graph`]: MLPs and the strided 1D-CNN encoder.

use rand::Rng;

use super::init::orthogonal;
use super::{Graph, NnError, ParamStore, Result, Tensor, Var};

pub(crate) fn elu_scalar(x: f32) -> f32 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Elementwise ELU with unit alpha.
pub fn elu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| elu_scalar(v)).collect();
    // shape unchanged
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Affine layers `sizes[0] → sizes[1] → … → sizes[n]` with ELU between them.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub prefix: String,
    pub sizes: Vec<usize>,
    /// Apply ELU after the last layer too (used for shared trunks).
    pub activate_output: bool,
}

impl MlpSpec {
    pub fn new(prefix: impl Into<String>, sizes: Vec<usize>) -> Self {
        Self {
            prefix: prefix.into(),
            sizes,
            activate_output: false,
        }
    }

    pub fn trunk(prefix: impl Into<String>, sizes: Vec<usize>) -> Self {
        Self {
            activate_output: true,
            ..Self::new(prefix, sizes)
        }
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len().saturating_sub(1)
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap_or(&0)
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.{layer}.weight", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.{layer}.bias", self.prefix)
    }

    /// Orthogonal weights (`hidden_gain` on hidden layers, `output_gain` on
    /// the last one) and zero biases.
    pub fn register<R: Rng + ?Sized>(
        &self,
        store: &mut ParamStore,
        rng: &mut R,
        hidden_gain: f32,
        output_gain: f32,
    ) -> Result<()> {
        for l in 0..self.num_layers() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let gain = if l + 1 == self.num_layers() { output_gain } else { hidden_gain };
            store.insert(self.weight_name(l), Tensor::new(vec![i, o], orthogonal(i, o, gain, rng))?)?;
            store.insert(self.bias_name(l), Tensor::zeros(vec![o]))?;
        }
        Ok(())
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut h = x;
        for l in 0..self.num_layers() {
            let (_, cols) = g.shape(h);
            if cols != self.sizes[l] {
                return Err(NnError::Dimension {
                    layer: format!("{}.{l}", self.prefix),
                    expected: self.sizes[l],
                    actual: cols,
                });
            }
            let w = g.param(&self.weight_name(l))?;
            let b = g.param(&self.bias_name(l))?;
            let (wi, wo) = g.shape(w);
            if wi != self.sizes[l] || wo != self.sizes[l + 1] {
                return Err(NnError::Dimension {
                    layer: format!("{}.{l}", self.prefix),
                    expected: self.sizes[l] * self.sizes[l + 1],
                    actual: wi * wo,
                });
            }
            h = g.linear(h, w, b)?;
            if l + 1 < self.num_layers() || self.activate_output {
                h = g.elu(h);
            }
        }
        Ok(h)
    }
}

/// Forward pass of a single input vector through the MLP stored under
/// `prefix` with the given layer sizes.
pub fn mlp_forward(params: &ParamStore, prefix: &str, x: &[f32], layer_sizes: &[usize]) -> Result<Vec<f32>> {
    let spec = MlpSpec::new(prefix, layer_sizes.to_vec());
    let mut g = Graph::new(params);
    let xi = g.input(1, x.len(), x.to_vec())?;
    let y = spec.forward(&mut g, xi)?;
    Ok(g.value(y).to_vec())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Strided 1D convolutions with ELU, flattened and linearly projected to a
/// latent vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvStackSpec {
    pub prefix: String,
    pub in_channels: usize,
    pub time_len: usize,
    pub layers: Vec<ConvLayerSpec>,
    pub latent_dim: usize,
}

impl ConvStackSpec {
    /// `(channels, time)` after each conv layer.
    pub fn layer_outputs(&self) -> Vec<(usize, usize)> {
        let mut t = self.time_len;
        self.layers
            .iter()
            .map(|l| {
                t = if t >= l.kernel { (t - l.kernel) / l.stride + 1 } else { 0 };
                (l.out_channels, t)
            })
            .collect()
    }

    pub fn flat_dim(&self) -> usize {
        self.layer_outputs().last().map(|(c, t)| c * t).unwrap_or(self.in_channels * self.time_len)
    }

    pub fn conv_weight_name(&self, l: usize) -> String {
        format!("{}.conv{l}.weight", self.prefix)
    }

    pub fn conv_bias_name(&self, l: usize) -> String {
        format!("{}.conv{l}.bias", self.prefix)
    }

    fn projection(&self) -> MlpSpec {
        MlpSpec::new(format!("{}.proj", self.prefix), vec![self.flat_dim(), self.latent_dim])
    }

    pub fn register<R: Rng + ?Sized>(
        &self,
        store: &mut ParamStore,
        rng: &mut R,
        hidden_gain: f32,
        output_gain: f32,
    ) -> Result<()> {
        if self.layer_outputs().iter().any(|&(_, t)| t == 0) {
            return Err(NnError::Dimension {
                layer: self.prefix.clone(),
                expected: self.time_len,
                actual: 0,
            });
        }
        let mut c_in = self.in_channels;
        for (l, spec) in self.layers.iter().enumerate() {
            let win = spec.kernel * c_in;
            store.insert(
                self.conv_weight_name(l),
                Tensor::new(
                    vec![spec.out_channels, spec.kernel, c_in],
                    orthogonal(spec.out_channels, win, hidden_gain, rng),
                )?,
            )?;
            store.insert(self.conv_bias_name(l), Tensor::zeros(vec![spec.out_channels]))?;
            c_in = spec.out_channels;
        }
        self.projection().register(store, rng, hidden_gain, output_gain)
    }

    /// `x` is `[B, time_len · in_channels]`, time-major (oldest frame first).
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (_, cols) = g.shape(x);
        if cols != self.time_len * self.in_channels {
            return Err(NnError::Dimension {
                layer: format!("{} input (time × channels)", self.prefix),
                expected: self.time_len * self.in_channels,
                actual: cols,
            });
        }
        let mut h = x;
        let mut c_in = self.in_channels;
        for (l, spec) in self.layers.iter().enumerate() {
            let w = g.param(&self.conv_weight_name(l))?;
            let b = g.param(&self.conv_bias_name(l))?;
            h = g.conv1d(h, w, b, c_in, spec.stride)?;
            h = g.elu(h);
            c_in = spec.out_channels;
        }
        self.projection().forward(g, h)
    }
}

/// Runs the conv stack on one `[channels, time]` tensor.
pub fn conv1d_forward(params: &ParamStore, x: &Tensor, spec: &ConvStackSpec) -> Result<Vec<f32>> {
    let (c, t) = match x.shape() {
        [c, t] => (*c, *t),
        s => {
            return Err(NnError::Shape {
                op: "conv1d_forward",
                lhs: s.to_vec(),
                rhs: vec![spec.in_channels, spec.time_len],
            })
        }
    };
    if t != spec.time_len {
        return Err(NnError::Dimension {
            layer: format!("{} time length", spec.prefix),
            expected: spec.time_len,
            actual: t,
        });
    }
    if c != spec.in_channels {
        return Err(NnError::Dimension {
            layer: format!("{} channels", spec.prefix),
            expected: spec.in_channels,
            actual: c,
        });
    }
    let src = x.data();
    let mut time_major = vec![0.0f32; c * t];
    for ch in 0..c {
        for ti in 0..t {
            time_major[ti * c + ch] = src[ch * t + ti];
        }
    }
    let mut g = Graph::new(params);
    let xi = g.input(1, c * t, time_major)?;
    let y = spec.forward(&mut g, xi)?;
    Ok(g.value(y).to_vec())
}
