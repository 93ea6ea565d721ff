//! Desk-scale laboratory for zero-shot generative classification.
//!
//! Trains toy conditional diffusion and autoregressive generative models on
//! procedurally generated shape/texture images, classifies via denoising-bound
//! scores and exact likelihoods, and evaluates them against discriminative
//! baselines with behavioral metrics (shape bias, OOD accuracy, error
//! consistency) over a parametric distortion suite.
//!
//! Module map:
//! - [`numeric`]: dense f64 tensors, splittable counter-based RNG, a small MLP
//!   with analytic gradients, Adam, and a direct 2-D DFT.
//! - [`synthdata`]: procedural shape masks, stationary textures, the
//!   cue-conflict composer, the distortion suite, and dataset files.
//! - [`diffusion`]: variance-preserving noising, the x0-prediction denoiser,
//!   training on the re-weighted denoising loss, and reconstruction.
//! - [`classifiers`]: the diffusion score classifier, an exact-likelihood
//!   autoregressive model, the analytic Gaussian observer, and discriminative
//!   baselines with optional diffusion-noise augmentation.
//! - [`metrics`]: shape bias, OOD accuracy, error consistency (Cohen's kappa),
//!   rank aggregation, and correlation analysis.
//! - [`harness`]: config parsing, end-to-end runs, persistence, CSV/SVG
//!   emission, and the CLI.

pub mod classifiers;
pub mod diffusion;
pub mod harness;
pub mod metrics;
pub mod numeric;
pub mod synthdata;
