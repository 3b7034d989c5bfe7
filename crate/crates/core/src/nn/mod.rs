//! Minimal dense tensors with reverse-mode gradients.
//!
//! Only what the encoders and the policy need: affine layers, strided 1D
//! convolutions, ELU, a handful of elementwise/reduction ops and diagonal
//! Gaussian log-densities. Graph values are row-major `rows × cols` matrices
//! of `f32`; parameters live in an ordered [`ParamStore`].

mod gemm;
pub mod gaussian;
pub mod gradcheck;
pub mod graph;
pub mod init;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use gaussian::{gaussian_log_prob, GaussianPolicyHead, HALF_LN_2PI, LOG_STD_MAX, LOG_STD_MIN};
pub use graph::{Gradients, Graph, Var};
pub use layers::{conv1d_forward, elu, mlp_forward, ConvLayerSpec, ConvStackSpec, MlpSpec};
pub use optim::Adam;
pub use params::ParamStore;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("dimension error at {layer}: expected {expected}, got {actual}")]
    Dimension {
        layer: String,
        expected: usize,
        actual: usize,
    },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("invalid graph state: {0}")]
    State(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, NnError>;
