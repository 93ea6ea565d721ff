use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{NumericError, Tensor};

/// Activation applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

/// One fully-connected layer: weight [out, in], bias [out].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self, NumericError> {
        if weight.shape().len() != 2 {
            return Err(NumericError::ShapeMismatch {
                context: "layer weight",
                expected: vec![0, 0],
                got: weight.shape().to_vec(),
            });
        }
        if bias.shape() != [weight.shape()[0]] {
            return Err(NumericError::ShapeMismatch {
                context: "layer bias",
                expected: vec![weight.shape()[0]],
                got: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Parameters of a fully-connected network. Hidden layers use tanh, the
/// final layer is identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self, NumericError> {
        for i in 1..layers.len() {
            let expected = layers[i].input_dim();
            let got = layers[i - 1].output_dim();
            if expected != got {
                return Err(NumericError::LayerChain {
                    index: i,
                    expected,
                    got,
                });
            }
        }
        if let Some(last) = layers.last() {
            if last.activation != Activation::Identity {
                return Err(NumericError::FinalActivation);
            }
        }
        Ok(Self { layers })
    }

    /// Random init: tanh layers for every hidden size, identity output.
    /// Weights ~ Normal(0, 1/sqrt(fan_in)), biases zero.
    pub fn init(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        stream: &mut super::RngStream,
    ) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let (n_in, n_out) = (dims[i], dims[i + 1]);
            let scale = 1.0 / (n_in as f64).sqrt();
            let weight = stream.sample_gaussian(&[n_out, n_in]).map(|v| v * scale);
            let bias = Tensor::zeros(&[n_out]);
            let activation = if i + 2 == dims.len() {
                Activation::Identity
            } else {
                Activation::Tanh
            };
            layers.push(Layer {
                weight,
                bias,
                activation,
            });
        }
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Flat mutable views over every parameter block, weights then bias per layer.
    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.data_mut()])
            .collect()
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.data()])
            .collect()
    }
}

/// Gradients mirroring [`MlpParams`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            weights: params
                .layers()
                .iter()
                .map(|l| Tensor::zeros(l.weight.shape()))
                .collect(),
            biases: params
                .layers()
                .iter()
                .map(|l| Tensor::zeros(l.bias.shape()))
                .collect(),
        }
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.data(), b.data()])
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(Tensor::all_finite) && self.biases.iter().all(Tensor::all_finite)
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for v in t.data_mut() {
                *v *= s;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// GEMM kernels
//
// All kernels accumulate along k in ascending order with a fixed pattern, so
// every output entry is bit-reproducible regardless of batch width or thread
// count. Parallelism only ever splits output rows across threads.
// ---------------------------------------------------------------------------

const PAR_FLOP_THRESHOLD: usize = 1 << 22;
/// Rows per cache block; sized so a block of 3k-wide f64 rows stays in L2.
const BLOCK: usize = 8;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 8;
    let mut acc = [0.0f64; 8];
    for i in 0..chunks {
        let j = i * 8;
        for lane in 0..8 {
            acc[lane] += a[j + lane] * b[j + lane];
        }
    }
    let mut tail = 0.0;
    for j in chunks * 8..a.len() {
        tail += a[j] * b[j];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

fn par_row_chunks<'a>(
    c: &'a mut [f64],
    a: &'a [f64],
    m: usize,
    k: usize,
    n: usize,
    parallel: bool,
    body: impl Fn(&mut [f64], &[f64]) + Sync,
) {
    if parallel && m > 1 {
        let threads = rayon::current_num_threads().max(1);
        let rows_per = m.div_ceil(threads).max(1);
        c.par_chunks_mut(rows_per * n)
            .zip(a.par_chunks(rows_per * k))
            .for_each(|(cc, ac)| body(cc, ac));
    } else {
        body(c, a);
    }
}

/// C [m, n] = A [m, k] * B^T where B is [n, k]. Row-major throughout.
///
/// Blocked over B rows so the hot block stays cached across the sweep of A.
/// Every output entry accumulates along k in ascending order, so results are
/// bit-identical for any blocking, batch width, or thread count.
pub(crate) fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    let parallel = 2 * m * n * k >= PAR_FLOP_THRESHOLD;
    par_row_chunks(c, a, m, k, n, parallel, |cc, ac| {
        let rows = ac.len() / k.max(1);
        let mut jb = 0;
        while jb < n {
            let jhi = (jb + BLOCK).min(n);
            for i in 0..rows {
                let row_a = &ac[i * k..(i + 1) * k];
                let row_c = &mut cc[i * n..(i + 1) * n];
                for j in jb..jhi {
                    row_c[j] = dot(row_a, &b[j * k..(j + 1) * k]);
                }
            }
            jb = jhi;
        }
    });
}

/// C [m, n] = A [m, k] * B [k, n]. Row-major; k-blocked row accumulation.
pub(crate) fn gemm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let parallel = 2 * m * n * k >= PAR_FLOP_THRESHOLD;
    par_row_chunks(c, a, m, k, n, parallel, |cc, ac| {
        let rows = ac.len() / k.max(1);
        cc.fill(0.0);
        let mut kb = 0;
        while kb < k {
            let khi = (kb + BLOCK).min(k);
            for i in 0..rows {
                let row_a = &ac[i * k..(i + 1) * k];
                let row_c = &mut cc[i * n..(i + 1) * n];
                for kk in kb..khi {
                    let av = row_a[kk];
                    let row_b = &b[kk * n..(kk + 1) * n];
                    for j in 0..n {
                        row_c[j] += av * row_b[j];
                    }
                }
            }
            kb = khi;
        }
    });
}

/// C [m, n] += A^T * B where A is [k, m], B is [k, n].
///
/// Output rows are processed in blocks with the full k sweep inside, keeping
/// B resident while each C block is written once.
pub(crate) fn gemm_tn_add(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let run = |c_chunk: &mut [f64], lo: usize| {
        let rows = c_chunk.len() / n.max(1);
        let mut ib = 0;
        while ib < rows {
            let ihi = (ib + BLOCK).min(rows);
            for kk in 0..k {
                let row_b = &b[kk * n..(kk + 1) * n];
                let row_a = &a[kk * m..(kk + 1) * m];
                for i in ib..ihi {
                    let av = row_a[lo + i];
                    let row_c = &mut c_chunk[i * n..(i + 1) * n];
                    for j in 0..n {
                        row_c[j] += av * row_b[j];
                    }
                }
            }
            ib = ihi;
        }
    };
    if 2 * m * n * k >= PAR_FLOP_THRESHOLD && m >= 2 {
        let threads = rayon::current_num_threads().max(1);
        let rows_per = m.div_ceil(threads).max(1);
        let starts: Vec<usize> = (0..m).step_by(rows_per).collect();
        c.par_chunks_mut(rows_per * n)
            .zip(starts)
            .for_each(|(chunk, lo)| run(chunk, lo));
    } else {
        run(c, 0);
    }
}

#[inline]
fn apply_activation(act: Activation, z: &mut [f64]) {
    if act == Activation::Tanh {
        for v in z.iter_mut() {
            *v = v.tanh();
        }
    }
}

/// Forward trace: post-activation outputs of every layer for a batch.
pub(crate) struct ForwardTrace {
    /// activations[l] has shape [batch, dims[l+1]]; activations[l].1 = width.
    pub activations: Vec<(Vec<f64>, usize)>,
}

/// Batched forward pass. `inputs` is row-major [batch, input_dim].
pub(crate) fn forward_batch(
    params: &MlpParams,
    inputs: &[f64],
    batch: usize,
) -> Result<ForwardTrace, NumericError> {
    let in_dim = params.input_dim();
    if inputs.len() != batch * in_dim {
        return Err(NumericError::ShapeMismatch {
            context: "mlp forward input",
            expected: vec![batch, in_dim],
            got: vec![inputs.len() / in_dim.max(1), in_dim],
        });
    }
    let mut activations = Vec::with_capacity(params.layers().len());
    let mut current: &[f64] = inputs;
    for layer in params.layers() {
        let (n_out, n_in) = (layer.output_dim(), layer.input_dim());
        let mut z = vec![0.0f64; batch * n_out];
        gemm_nt(current, layer.weight.data(), &mut z, batch, n_in, n_out);
        let bias = layer.bias.data();
        for row in z.chunks_mut(n_out) {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        apply_activation(layer.activation, &mut z);
        activations.push((z, n_out));
        current = &activations.last().expect("pushed").0;
    }
    Ok(ForwardTrace { activations })
}

/// Batched backward pass; returns parameter grads (summed over the batch)
/// and the input gradient [batch, input_dim].
pub(crate) fn backward_batch(
    params: &MlpParams,
    inputs: &[f64],
    batch: usize,
    trace: &ForwardTrace,
    output_grad: &[f64],
) -> Result<(MlpGrads, Vec<f64>), NumericError> {
    let n_layers = params.layers().len();
    let out_dim = params.output_dim();
    if output_grad.len() != batch * out_dim {
        return Err(NumericError::ShapeMismatch {
            context: "mlp backward output_grad",
            expected: vec![batch, out_dim],
            got: vec![output_grad.len() / out_dim.max(1), out_dim],
        });
    }
    let mut grads = MlpGrads::zeros_like(params);
    let mut delta = output_grad.to_vec();
    for l in (0..n_layers).rev() {
        let layer = &params.layers()[l];
        let (n_out, n_in) = (layer.output_dim(), layer.input_dim());
        // dZ = dY .* act'(y)
        if layer.activation == Activation::Tanh {
            let y = &trace.activations[l].0;
            for (d, &yv) in delta.iter_mut().zip(y) {
                *d *= 1.0 - yv * yv;
            }
        }
        let prev: &[f64] = if l == 0 {
            inputs
        } else {
            &trace.activations[l - 1].0
        };
        // dW += dZ^T * prev ; db += column sums of dZ
        gemm_tn_add(
            &delta,
            prev,
            grads.weights[l].data_mut(),
            n_out,
            batch,
            n_in,
        );
        let db = grads.biases[l].data_mut();
        for row in delta.chunks(n_out) {
            for (g, d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }
        // dPrev = dZ * W
        let mut dprev = vec![0.0f64; batch * n_in];
        gemm_nn(&delta, layer.weight.data(), &mut dprev, batch, n_out, n_in);
        delta = dprev;
    }
    Ok((grads, delta))
}

/// Forward evaluation of the network on a single input vector.
pub fn mlp_forward(params: &MlpParams, input: &Tensor) -> Result<Tensor, NumericError> {
    if input.len() != params.input_dim() {
        return Err(NumericError::ShapeMismatch {
            context: "mlp input",
            expected: vec![params.input_dim()],
            got: input.shape().to_vec(),
        });
    }
    let trace = forward_batch(params, input.data(), 1)?;
    let (out, _) = trace.activations.into_iter().last().expect("layers");
    Ok(Tensor::from_vec(out))
}

/// Exact reverse-mode gradients of the forward map for one input.
///
/// Returns the parameter gradients and the gradient with respect to the input.
pub fn mlp_backward(
    params: &MlpParams,
    input: &Tensor,
    output_grad: &Tensor,
) -> Result<(MlpGrads, Tensor), NumericError> {
    if input.len() != params.input_dim() {
        return Err(NumericError::ShapeMismatch {
            context: "mlp input",
            expected: vec![params.input_dim()],
            got: input.shape().to_vec(),
        });
    }
    if output_grad.len() != params.output_dim() {
        return Err(NumericError::ShapeMismatch {
            context: "mlp output_grad",
            expected: vec![params.output_dim()],
            got: output_grad.shape().to_vec(),
        });
    }
    let trace = forward_batch(params, input.data(), 1)?;
    let (grads, dinput) = backward_batch(params, input.data(), 1, &trace, output_grad.data())?;
    Ok((grads, Tensor::from_vec(dinput)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::RngStream;

    fn identity_layer(dim: usize) -> Layer {
        let mut w = Tensor::zeros(&[dim, dim]);
        for i in 0..dim {
            w.set2(i, i, 1.0);
        }
        Layer::new(w, Tensor::zeros(&[dim]), Activation::Identity).unwrap()
    }

    #[test]
    fn identity_network_is_identity() {
        let params = MlpParams::new(vec![identity_layer(4)]).unwrap();
        let x = Tensor::from_vec(vec![0.3, -1.2, 4.0, 0.0]);
        let y = mlp_forward(&params, &x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_tanh_layer_outputs_zero() {
        let tanh = Layer::new(Tensor::zeros(&[3, 2]), Tensor::zeros(&[3]), Activation::Tanh)
            .unwrap();
        let out = Layer::new(
            {
                let mut w = Tensor::zeros(&[3, 3]);
                for i in 0..3 {
                    w.set2(i, i, 1.0);
                }
                w
            },
            Tensor::zeros(&[3]),
            Activation::Identity,
        )
        .unwrap();
        let params = MlpParams::new(vec![tanh, out]).unwrap();
        let y = mlp_forward(&params, &Tensor::from_vec(vec![1.0, -2.0])).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fixed_221_network_matches_hand_evaluation() {
        // Hidden: tanh(W1 x + b1), W1 = [[0.5, -1.0], [0.25, 0.75]], b1 = [0.1, -0.2]
        // Output: W2 h + b2, W2 = [[2.0, -0.5]], b2 = [0.3]
        let w1 = Tensor::new(vec![2, 2], vec![0.5, -1.0, 0.25, 0.75]).unwrap();
        let b1 = Tensor::from_vec(vec![0.1, -0.2]);
        let w2 = Tensor::new(vec![1, 2], vec![2.0, -0.5]).unwrap();
        let b2 = Tensor::from_vec(vec![0.3]);
        let params = MlpParams::new(vec![
            Layer::new(w1, b1, Activation::Tanh).unwrap(),
            Layer::new(w2, b2, Activation::Identity).unwrap(),
        ])
        .unwrap();
        let x = [0.6f64, -0.4];
        let h0 = (0.5 * x[0] - 1.0 * x[1] + 0.1).tanh();
        let h1 = (0.25 * x[0] + 0.75 * x[1] - 0.2).tanh();
        let expected = 2.0 * h0 - 0.5 * h1 + 0.3;
        let y = mlp_forward(&params, &Tensor::from_vec(x.to_vec())).unwrap();
        assert!((y.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let mut stream = RngStream::new(1).derive(0);
        let params = MlpParams::init(3, &[4, 4], 2, &mut stream);
        let x = stream.sample_gaussian(&[3]);
        let (grads, dx) = mlp_backward(&params, &x, &Tensor::zeros(&[2])).unwrap();
        assert!(grads.blocks().iter().all(|b| b.iter().all(|&v| v == 0.0)));
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_identity_layer_input_grad_is_w_transpose_times_grad() {
        let w = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let params = MlpParams::new(vec![
            Layer::new(w, Tensor::zeros(&[2]), Activation::Identity).unwrap(),
        ])
        .unwrap();
        let g = Tensor::from_vec(vec![0.5, -1.5]);
        let (_, dx) = mlp_backward(&params, &Tensor::zeros(&[3]), &g).unwrap();
        // W^T g
        assert_eq!(
            dx.data(),
            &[
                1.0 * 0.5 + 4.0 * -1.5,
                2.0 * 0.5 + 5.0 * -1.5,
                3.0 * 0.5 + 6.0 * -1.5
            ]
        );
    }

    /// Central finite differences on a scalar loss 0.5*||f(x)||^2.
    fn finite_diff_check(params: &MlpParams, x: &Tensor) -> f64 {
        let loss = |p: &MlpParams| -> f64 {
            let y = mlp_forward(p, x).unwrap();
            0.5 * y.sq_norm()
        };
        let y = mlp_forward(params, x).unwrap();
        let (grads, _) = mlp_backward(params, x, &y).unwrap();
        let analytic = grads.blocks();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut probe = params.clone();
        let n_blocks = analytic.len();
        for bi in 0..n_blocks {
            let block_len = analytic[bi].len();
            for i in 0..block_len {
                let orig = probe.blocks_mut()[bi][i];
                probe.blocks_mut()[bi][i] = orig + h;
                let up = loss(&probe);
                probe.blocks_mut()[bi][i] = orig - h;
                let down = loss(&probe);
                probe.blocks_mut()[bi][i] = orig;
                let fd = (up - down) / (2.0 * h);
                let a = analytic[bi][i];
                let denom = a.abs().max(fd.abs()).max(1e-8 / 1e-4);
                worst = worst.max((a - fd).abs() / denom);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let stream = RngStream::new(7).derive_str("gradcheck");
        for trial in 0..10 {
            let params = MlpParams::init(4, &[5, 4], 3, &mut stream.derive(trial));
            let x = stream.derive(1000 + trial).sample_gaussian(&[4]);
            let worst = finite_diff_check(&params, &x);
            assert!(worst < 1e-4, "trial {trial}: worst relative error {worst:.2e}");
        }
    }

    #[test]
    fn batch_matches_single() {
        let mut stream = RngStream::new(3).derive(9);
        let params = MlpParams::init(6, &[8], 5, &mut stream);
        let a = stream.sample_gaussian(&[6]);
        let b = stream.sample_gaussian(&[6]);
        let mut joint = a.data().to_vec();
        joint.extend_from_slice(b.data());
        let trace = forward_batch(&params, &joint, 2).unwrap();
        let (out, w) = trace.activations.last().unwrap();
        assert_eq!(*w, 5);
        let ya = mlp_forward(&params, &a).unwrap();
        let yb = mlp_forward(&params, &b).unwrap();
        assert_eq!(&out[..5], ya.data());
        assert_eq!(&out[5..], yb.data());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut stream = RngStream::new(0).derive(0);
        let params = MlpParams::init(3, &[4], 2, &mut stream);
        assert!(mlp_forward(&params, &Tensor::zeros(&[5])).is_err());
        assert!(mlp_backward(&params, &Tensor::zeros(&[3]), &Tensor::zeros(&[9])).is_err());
    }

    #[test]
    fn layer_chain_is_validated() {
        let l1 = Layer::new(Tensor::zeros(&[4, 3]), Tensor::zeros(&[4]), Activation::Tanh).unwrap();
        let l2 = Layer::new(Tensor::zeros(&[2, 5]), Tensor::zeros(&[2]), Activation::Identity)
            .unwrap();
        assert!(matches!(
            MlpParams::new(vec![l1, l2]),
            Err(NumericError::LayerChain { .. })
        ));
    }
}
