//! Conditional diffusion at desk scale: the variance-preserving continuous
//! schedule, an x0-prediction MLP denoiser, training on the re-weighted
//! denoising loss, and single-step class-conditional reconstruction.

mod model;
mod train;

pub use model::{Denoiser, DenoiserConfig, DenoiserModel};
pub use train::{
    diffusion_loss_grad, diffusion_loss_value, reconstruct, train_diffusion, DiffusionTrainConfig,
    TrainWeight,
};

use thiserror::Error;

use crate::numeric::{RngStream, Tensor};

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("time {0} outside [0, 1]")]
    TimeOutOfRange(f64),
    #[error("class {class} out of range for {classes} classes")]
    BadClass { class: usize, classes: usize },
    #[error("training diverged at step {step} (loss {loss}); trace retained")]
    Divergence {
        step: usize,
        loss: f64,
        trace: Vec<f64>,
    },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("image length {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Numeric(#[from] crate::numeric::NumericError),
}

/// Variance-preserving continuous-time schedule with `alpha(t) = sqrt(1 - t)`.
///
/// `alpha_sq + sigma_sq == 1` holds exactly: sigma_sq is defined as the
/// complement of alpha_sq. With t uniform on [0, 1], alpha^2 is uniform too.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NoiseSchedule;

impl NoiseSchedule {
    #[inline]
    pub fn alpha_sq(&self, t: f64) -> f64 {
        1.0 - t
    }

    #[inline]
    pub fn sigma_sq(&self, t: f64) -> f64 {
        1.0 - self.alpha_sq(t)
    }

    #[inline]
    pub fn alpha(&self, t: f64) -> f64 {
        self.alpha_sq(t).sqrt()
    }

    #[inline]
    pub fn sigma(&self, t: f64) -> f64 {
        self.sigma_sq(t).sqrt()
    }
}

/// Map unit-interval pixels to the zero-centered model space.
#[inline]
pub fn to_model_space(v: f64) -> f64 {
    2.0 * v - 1.0
}

/// Map model-space values back to display range, clipped.
#[inline]
pub fn from_model_space(v: f64) -> f64 {
    ((v + 1.0) / 2.0).clamp(0.0, 1.0)
}

/// Noise a model-space image to time `t`: `x_t = alpha(t) x0 + sigma(t) eps`.
/// Returns the latent and the noise that produced it.
pub fn forward_sample(
    schedule: &NoiseSchedule,
    x0: &Tensor,
    t: f64,
    stream: &mut RngStream,
) -> Result<(Tensor, Tensor), DiffusionError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(DiffusionError::TimeOutOfRange(t));
    }
    let eps = stream.sample_gaussian(x0.shape());
    let (a, s) = (schedule.alpha(t), schedule.sigma(t));
    let data: Vec<f64> = x0
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&x, &e)| a * x + s * e)
        .collect();
    Ok((Tensor::new(x0.shape().to_vec(), data)?, eps))
}
