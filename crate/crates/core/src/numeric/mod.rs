//! Numeric substrate: tensors, reproducible RNG, a small MLP with analytic
//! gradients, an adaptive-moment optimizer, and a direct 2-D DFT.

mod dft;
pub(crate) mod mlp;
mod optim;
mod rng;
mod tensor;

pub use dft::{dft2, idft2, Spectrum};
pub use mlp::{mlp_backward, mlp_forward, Activation, Layer, MlpGrads, MlpParams};
pub use optim::OptimizerState;
pub use rng::RngStream;
pub use tensor::Tensor;

use thiserror::Error;

/// Errors raised by the numeric substrate.
#[derive(Debug, Error)]
pub enum NumericError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },
    #[error("layer dimensions do not chain: layer {index} expects input {expected}, previous layer outputs {got}")]
    LayerChain {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("final layer activation must be identity")]
    FinalActivation,
    #[error("spectrum is not conjugate-symmetric (max deviation {max_dev:.3e}); real inverse undefined")]
    NonSymmetricSpectrum { max_dev: f64 },
    #[error("dft input must be 2-d, got shape {shape:?}")]
    NotTwoDimensional { shape: Vec<usize> },
}

/// Internal hooks for performance probes; not part of the public surface.
#[doc(hidden)]
pub mod test_support {
    use super::*;

    #[doc(hidden)]
    pub fn forward_batch_probe(params: &MlpParams, inputs: &[f64], batch: usize) -> Vec<f64> {
        let trace = mlp::forward_batch(params, inputs, batch).unwrap();
        trace.activations.into_iter().last().unwrap().0
    }
}
