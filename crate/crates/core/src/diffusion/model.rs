use serde::{Deserialize, Serialize};

use crate::numeric::{MlpParams, RngStream, Tensor};

use super::DiffusionError;

/// Anything that predicts the clean observation from a noised latent,
/// conditioned on a class and the noise time.
pub trait Denoiser: Sync {
    fn num_classes(&self) -> usize;

    /// Predicted x0 (model space) for one latent.
    fn denoise(&self, x_t: &Tensor, class: usize, t: f64) -> Tensor;

    /// Batched prediction: `x_ts` holds `draws` row-major latents of length
    /// `dim`, one per entry of `ts`. Returns row-major predictions.
    fn denoise_batch(&self, x_ts: &[f64], ts: &[f64], class: usize, dim: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(x_ts.len());
        for (row, &t) in x_ts.chunks(dim).zip(ts) {
            let x = Tensor::from_vec(row.to_vec());
            out.extend_from_slice(self.denoise(&x, class, t).data());
        }
        out
    }
}

/// Architecture of the MLP denoiser. The input is the flattened latent,
/// then sinusoidal time features, then the class one-hot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiserConfig {
    pub image_size: usize,
    pub channels: usize,
    pub classes: usize,
    pub hidden: Vec<usize>,
    pub time_feature_pairs: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            channels: 3,
            classes: 8,
            hidden: vec![256, 256],
            time_feature_pairs: 8,
        }
    }
}

impl DenoiserConfig {
    pub fn image_dim(&self) -> usize {
        self.image_size * self.image_size * self.channels
    }

    pub fn conditioning_dim(&self) -> usize {
        2 * self.time_feature_pairs + self.classes
    }

    pub fn input_dim(&self) -> usize {
        self.image_dim() + self.conditioning_dim()
    }

    /// sin/cos(2 pi k t) for k = 1..=pairs.
    pub fn time_features(&self, t: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.time_feature_pairs);
        for k in 1..=self.time_feature_pairs {
            let phase = std::f64::consts::TAU * k as f64 * t;
            out.push(phase.sin());
            out.push(phase.cos());
        }
        out
    }
}

/// The conditional x0-prediction network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserModel {
    pub config: DenoiserConfig,
    pub params: MlpParams,
}

impl DenoiserModel {
    pub fn init(config: DenoiserConfig, stream: &mut RngStream) -> Self {
        let params = MlpParams::init(
            config.input_dim(),
            &config.hidden,
            config.image_dim(),
            stream,
        );
        Self { config, params }
    }

    pub fn check_class(&self, class: usize) -> Result<(), DiffusionError> {
        if class >= self.config.classes {
            return Err(DiffusionError::BadClass {
                class,
                classes: self.config.classes,
            });
        }
        Ok(())
    }

    /// Assemble the network input for one latent.
    pub fn assemble_input(&self, x_t: &[f64], class: usize, t: f64) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.config.input_dim());
        input.extend_from_slice(x_t);
        input.extend_from_slice(&self.config.time_features(t));
        let mut onehot = vec![0.0; self.config.classes];
        onehot[class] = 1.0;
        input.extend_from_slice(&onehot);
        input
    }

    /// First-layer pre-activations shared by every class: the image and time
    /// columns plus the bias. Scoring all K classes then only needs the
    /// class column added per class, instead of K full first-layer passes.
    pub(crate) fn shared_preactivation(&self, x_ts: &[f64], ts: &[f64], dim: usize) -> Vec<f64> {
        let layer = &self.params.layers()[0];
        let h = layer.output_dim();
        let draws = ts.len();
        let d_cond = 2 * self.config.time_feature_pairs;
        // Pack [x_t | time features] rows.
        let mut rows = Vec::with_capacity(draws * (dim + d_cond));
        for (row, &t) in x_ts.chunks(dim).zip(ts) {
            rows.extend_from_slice(row);
            rows.extend_from_slice(&self.config.time_features(t));
        }
        // Weight rows restricted to the image+time prefix.
        let in_dim = layer.input_dim();
        let w = layer.weight.data();
        let mut base = vec![0.0f64; draws * h];
        for (r, chunk) in base.chunks_mut(h).enumerate() {
            let row = &rows[r * (dim + d_cond)..(r + 1) * (dim + d_cond)];
            for (j, out) in chunk.iter_mut().enumerate() {
                let wrow = &w[j * in_dim..j * in_dim + dim + d_cond];
                let mut acc = [0.0f64; 4];
                let n4 = (dim + d_cond) / 4 * 4;
                let mut i = 0;
                while i < n4 {
                    acc[0] += row[i] * wrow[i];
                    acc[1] += row[i + 1] * wrow[i + 1];
                    acc[2] += row[i + 2] * wrow[i + 2];
                    acc[3] += row[i + 3] * wrow[i + 3];
                    i += 4;
                }
                let mut tail = 0.0;
                for ii in n4..dim + d_cond {
                    tail += row[ii] * wrow[ii];
                }
                *out = (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail + layer.bias.data()[j];
            }
        }
        base
    }

    /// Finish the forward pass for one class given the shared first-layer
    /// pre-activation.
    pub(crate) fn outputs_from_shared(&self, base: &[f64], draws: usize, class: usize) -> Vec<f64> {
        let layers = self.params.layers();
        let first = &layers[0];
        let h = first.output_dim();
        let in_dim = first.input_dim();
        let class_col = in_dim - self.config.classes + class;
        let w = first.weight.data();
        let mut act = vec![0.0f64; draws * h];
        for (r, chunk) in act.chunks_mut(h).enumerate() {
            for (j, out) in chunk.iter_mut().enumerate() {
                let z = base[r * h + j] + w[j * in_dim + class_col];
                *out = z.tanh();
            }
        }
        // Remaining layers via the batched path.
        let mut current = act;
        let mut width = h;
        for layer in &layers[1..] {
            let n_out = layer.output_dim();
            let mut z = vec![0.0f64; draws * n_out];
            crate::numeric::mlp::gemm_nt(&current, layer.weight.data(), &mut z, draws, width, n_out);
            let bias = layer.bias.data();
            for row in z.chunks_mut(n_out) {
                for (v, b) in row.iter_mut().zip(bias) {
                    *v += b;
                }
            }
            if layer.activation == crate::numeric::Activation::Tanh {
                for v in z.iter_mut() {
                    *v = v.tanh();
                }
            }
            current = z;
            width = n_out;
        }
        current
    }
}

impl Denoiser for DenoiserModel {
    fn num_classes(&self) -> usize {
        self.config.classes
    }

    fn denoise(&self, x_t: &Tensor, class: usize, t: f64) -> Tensor {
        let input = self.assemble_input(x_t.data(), class, t);
        let out = crate::numeric::mlp_forward(&self.params, &Tensor::from_vec(input))
            .expect("dimensions fixed by config");
        out.reshaped(x_t.shape().to_vec())
            .expect("output matches image dim")
    }

    fn denoise_batch(&self, x_ts: &[f64], ts: &[f64], class: usize, dim: usize) -> Vec<f64> {
        let base = self.shared_preactivation(x_ts, ts, dim);
        self.outputs_from_shared(&base, ts.len(), class)
    }
}
