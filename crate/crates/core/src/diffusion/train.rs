use serde::{Deserialize, Serialize};

use crate::numeric::{mlp, OptimizerState, RngStream, Tensor};

use super::{
    forward_sample, to_model_space, Denoiser, DenoiserConfig, DenoiserModel, DiffusionError,
    NoiseSchedule,
};

/// Per-timestep weight applied to the denoising error during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainWeight {
    Uniform,
    Exp7,
}

impl TrainWeight {
    #[inline]
    pub fn weight(&self, t: f64) -> f64 {
        match self {
            TrainWeight::Uniform => 1.0,
            TrainWeight::Exp7 => (-7.0 * t).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub weight: TrainWeight,
    pub seed: u64,
}

impl Default for DiffusionTrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch: 24,
            learning_rate: 1e-3,
            weight: TrainWeight::Uniform,
            seed: 0,
        }
    }
}

/// Per-example draws for one batch: times, latents, targets, labels.
struct BatchDraws {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    weights: Vec<f64>,
}

/// Assemble one Monte Carlo batch. Each example gets its own t ~ U([0,1])
/// and noise; the model input rows are [x_t | time features | one-hot].
fn draw_batch(
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    batch: &[(&Tensor, usize)],
    weight: TrainWeight,
    stream: &mut RngStream,
) -> Result<BatchDraws, DiffusionError> {
    let dim = model.config.image_dim();
    let mut inputs = Vec::with_capacity(batch.len() * model.config.input_dim());
    let mut targets = Vec::with_capacity(batch.len() * dim);
    let mut weights = Vec::with_capacity(batch.len());
    for (x0, label) in batch {
        model.check_class(*label)?;
        if x0.len() != dim {
            return Err(DiffusionError::DimensionMismatch {
                expected: dim,
                got: x0.len(),
            });
        }
        let t = stream.next_f64();
        let (x_t, _) = forward_sample(schedule, x0, t, stream)?;
        inputs.extend_from_slice(&model.assemble_input(x_t.data(), *label, t));
        targets.extend_from_slice(x0.data());
        weights.push(weight.weight(t));
    }
    Ok(BatchDraws {
        inputs,
        targets,
        weights,
    })
}

/// Monte Carlo estimate of the weighted denoising loss for any denoiser:
/// mean over the batch of w_t times the mean squared x0-prediction error.
///
/// Expects model-space images. Deterministic given the stream.
pub fn diffusion_loss_value(
    denoiser: &impl Denoiser,
    schedule: &NoiseSchedule,
    batch: &[(&Tensor, usize)],
    weight: TrainWeight,
    stream: &mut RngStream,
) -> Result<f64, DiffusionError> {
    let mut total = 0.0;
    for (x0, label) in batch {
        if *label >= denoiser.num_classes() {
            return Err(DiffusionError::BadClass {
                class: *label,
                classes: denoiser.num_classes(),
            });
        }
        let t = stream.next_f64();
        let (x_t, _) = forward_sample(schedule, x0, t, stream)?;
        let pred = denoiser.denoise(&x_t, *label, t);
        let mut err = 0.0;
        for (p, x) in pred.data().iter().zip(x0.data()) {
            err += (p - x) * (p - x);
        }
        total += weight.weight(t) * err / x0.len() as f64;
    }
    let loss = total / batch.len().max(1) as f64;
    if !loss.is_finite() {
        return Err(DiffusionError::Divergence {
            step: 0,
            loss,
            trace: Vec::new(),
        });
    }
    Ok(loss)
}

/// Loss and exact parameter gradients for the MLP denoiser on one batch.
/// The same stream always produces the same draws, so central finite
/// differences over a cloned stream check these gradients directly.
pub fn diffusion_loss_grad(
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    batch: &[(&Tensor, usize)],
    weight: TrainWeight,
    stream: &mut RngStream,
) -> Result<(f64, crate::numeric::MlpGrads), DiffusionError> {
    let draws = draw_batch(model, schedule, batch, weight, stream)?;
    let n = batch.len();
    let dim = model.config.image_dim();
    let trace = mlp::forward_batch(&model.params, &draws.inputs, n)?;
    let outputs = &trace.activations.last().expect("layers").0;
    let mut loss = 0.0;
    let mut output_grad = vec![0.0f64; n * dim];
    let scale = 1.0 / (n as f64 * dim as f64);
    for r in 0..n {
        let w = draws.weights[r];
        for i in 0..dim {
            let diff = outputs[r * dim + i] - draws.targets[r * dim + i];
            loss += w * diff * diff * scale;
            output_grad[r * dim + i] = 2.0 * w * diff * scale;
        }
    }
    if !loss.is_finite() {
        return Err(DiffusionError::Divergence {
            step: 0,
            loss,
            trace: Vec::new(),
        });
    }
    let (grads, _) = mlp::backward_batch(&model.params, &draws.inputs, n, &trace, &output_grad)?;
    Ok((loss, grads))
}

/// Train the conditional denoiser. Images arrive in display space [0, 1] and
/// are mapped to model space once. Returns the model and a smoothed loss
/// trace (exponential moving average, one entry per step).
pub fn train_diffusion(
    config: &DiffusionTrainConfig,
    arch: DenoiserConfig,
    dataset: &[(Tensor, usize)],
) -> Result<(DenoiserModel, Vec<f64>), DiffusionError> {
    if dataset.is_empty() {
        return Err(DiffusionError::EmptyDataset);
    }
    let schedule = NoiseSchedule;
    let root = RngStream::new(config.seed).derive_str("train-diffusion");
    let mut model = DenoiserModel::init(arch, &mut root.derive_str("init"));
    for (_, label) in dataset {
        model.check_class(*label)?;
    }
    let scaled: Vec<(Tensor, usize)> = dataset
        .iter()
        .map(|(x, y)| (x.map(to_model_space), *y))
        .collect();
    let mut opt = OptimizerState::new(&model.params, config.learning_rate);
    let mut trace = Vec::with_capacity(config.steps);
    let mut smoothed = f64::NAN;
    let batch_stream = root.derive_str("batches");
    for step in 0..config.steps {
        let mut stream = batch_stream.derive(step as u64);
        let batch: Vec<(&Tensor, usize)> = (0..config.batch)
            .map(|_| {
                let idx = stream.next_below(scaled.len());
                (&scaled[idx].0, scaled[idx].1)
            })
            .collect();
        let (loss, grads) =
            diffusion_loss_grad(&model, &schedule, &batch, config.weight, &mut stream).map_err(
                |e| match e {
                    DiffusionError::Divergence { .. } => DiffusionError::Divergence {
                        step,
                        loss: f64::NAN,
                        trace: trace.clone(),
                    },
                    other => other,
                },
            )?;
        smoothed = if smoothed.is_nan() {
            loss
        } else {
            0.98 * smoothed + 0.02 * loss
        };
        trace.push(smoothed);
        opt.step(&mut model.params, &grads).map_err(|_| {
            DiffusionError::Divergence {
                step,
                loss,
                trace: trace.clone(),
            }
        })?;
    }
    Ok((model, trace))
}

/// Single-step class-conditional reconstruction: noise `x` (display space) to
/// time `t`, predict x0 under the given class, and return the prediction in
/// display space.
pub fn reconstruct(
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    x: &Tensor,
    class: usize,
    t: f64,
    stream: &mut RngStream,
) -> Result<Tensor, DiffusionError> {
    model.check_class(class)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(DiffusionError::TimeOutOfRange(t));
    }
    let x0 = x.map(to_model_space);
    let (x_t, _) = forward_sample(schedule, &x0, t, stream)?;
    let pred = model.denoise(&x_t, class, t);
    Ok(pred.map(super::from_model_space))
}
