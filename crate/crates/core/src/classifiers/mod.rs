//! The four decision-makers: diffusion score classifier, exact-likelihood
//! autoregressive model, analytic Gaussian observer, and discriminative
//! baselines with optional diffusion-noise augmentation; plus the uniform
//! batch driver that turns stimuli into decision records.

mod ar;
mod baseline;
mod diffusion_score;
mod driver;
mod gaussian;

pub use ar::{ar_fit, ArModel};
pub use baseline::{
    noise_augment, train_baseline, BaselineClassifier, BaselineTrainConfig,
};
pub use diffusion_score::{
    classify_diffusion, DiffusionClassifierConfig, PruneRule, ScoreWeight,
};
pub use driver::{
    classify_batch, read_records_csv, write_records_csv, DecisionRecord, Observer,
};
pub use gaussian::{classify_bayes_exact, GaussianOracle, OracleDenoiser};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("empty class set")]
    EmptyClassSet,
    #[error("class {class} out of range for {classes} classes")]
    BadClass { class: usize, classes: usize },
    #[error("max_scores {max_scores} below pruning minimum {n_min}")]
    MaxScoresTooSmall { max_scores: usize, n_min: usize },
    #[error("max_scores must be at least 1")]
    NoScores,
    #[error("custom weight rate must be positive, got {0}")]
    BadWeightRate(f64),
    #[error("class {class} was never fitted")]
    UnfittedClass { class: usize },
    #[error("training dataset missing class {class}")]
    DatasetMissingClass { class: usize },
    #[error("autoregressive model needs at least two quantization levels, got {0}")]
    BadQuantization(usize),
    #[error("smoothing must be positive, got {0}")]
    BadSmoothing(f64),
    #[error("baseline training diverged at step {step} (loss {loss})")]
    BaselineDiverged { step: usize, loss: f64 },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("classifying {image_id}: {source}")]
    ImageContext {
        image_id: String,
        #[source]
        source: Box<ClassifierError>,
    },
    #[error("records file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("records file malformed at line {line}: {reason}")]
    MalformedRecords { line: usize, reason: String },
    #[error(transparent)]
    Diffusion(#[from] crate::diffusion::DiffusionError),
    #[error(transparent)]
    Numeric(#[from] crate::numeric::NumericError),
}
