use serde::{Deserialize, Serialize};

use crate::diffusion::{Denoiser, NoiseSchedule};
use crate::numeric::Tensor;

use super::ClassifierError;

/// Class-conditional isotropic Gaussian model: per-class mean plus a shared
/// variance. Closed-form companion for the score-based machinery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianOracle {
    pub means: Vec<Tensor>,
    pub sigma0: f64,
}

impl GaussianOracle {
    pub fn new(means: Vec<Tensor>, sigma0: f64) -> Result<Self, ClassifierError> {
        if means.is_empty() {
            return Err(ClassifierError::EmptyClassSet);
        }
        if !(sigma0 > 0.0) {
            return Err(ClassifierError::BadSmoothing(sigma0));
        }
        Ok(Self { means, sigma0 })
    }

    /// Fit class means and a pooled isotropic standard deviation.
    pub fn fit(dataset: &[(Tensor, usize)], classes: usize) -> Result<Self, ClassifierError> {
        if dataset.is_empty() {
            return Err(ClassifierError::EmptyDataset);
        }
        let dim = dataset[0].0.len();
        let mut sums = vec![vec![0.0f64; dim]; classes];
        let mut counts = vec![0usize; classes];
        for (x, y) in dataset {
            if *y >= classes {
                return Err(ClassifierError::BadClass {
                    class: *y,
                    classes,
                });
            }
            for (s, v) in sums[*y].iter_mut().zip(x.data()) {
                *s += v;
            }
            counts[*y] += 1;
        }
        for (class, &c) in counts.iter().enumerate() {
            if c == 0 {
                return Err(ClassifierError::DatasetMissingClass { class });
            }
        }
        let means: Vec<Tensor> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &c)| Tensor::from_vec(s.into_iter().map(|v| v / c as f64).collect()))
            .collect();
        let mut ssq = 0.0;
        let mut n = 0usize;
        for (x, y) in dataset {
            for (v, m) in x.data().iter().zip(means[*y].data()) {
                ssq += (v - m) * (v - m);
            }
            n += x.len();
        }
        let sigma0 = (ssq / n.max(1) as f64).sqrt().max(1e-9);
        Ok(Self { means, sigma0 })
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }
}

/// Exact Bayes rule under the oracle with a uniform prior: argmax of the
/// Gaussian log-density, which reduces to the nearest class mean. Ties break
/// to the lowest id. Returns the prediction and per-class log-likelihoods
/// (up to the shared constant).
pub fn classify_bayes_exact(oracle: &GaussianOracle, x: &Tensor) -> (usize, Vec<f64>) {
    let inv = 1.0 / (2.0 * oracle.sigma0 * oracle.sigma0);
    let logliks: Vec<f64> = oracle
        .means
        .iter()
        .map(|m| {
            let mut d2 = 0.0;
            for (v, mu) in x.data().iter().zip(m.data()) {
                d2 += (v - mu) * (v - mu);
            }
            -d2 * inv
        })
        .collect();
    let mut best = 0usize;
    for (k, &ll) in logliks.iter().enumerate().skip(1) {
        if ll > logliks[best] {
            best = k;
        }
    }
    (best, logliks)
}

/// The analytic posterior-mean denoiser for the Gaussian oracle:
/// `E[x0 | x_t, y] = mu_y + g (x_t - alpha mu_y)` with gain
/// `g = alpha sigma0^2 / (alpha^2 sigma0^2 + sigma^2)`.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    pub oracle: GaussianOracle,
    pub schedule: NoiseSchedule,
}

impl OracleDenoiser {
    pub fn gain(&self, t: f64) -> f64 {
        let a = self.schedule.alpha(t);
        let s2 = self.schedule.sigma_sq(t);
        let v = self.oracle.sigma0 * self.oracle.sigma0;
        a * v / (a * a * v + s2)
    }
}

impl Denoiser for OracleDenoiser {
    fn num_classes(&self) -> usize {
        self.oracle.classes()
    }

    fn denoise(&self, x_t: &Tensor, class: usize, t: f64) -> Tensor {
        let mu = &self.oracle.means[class];
        let g = self.gain(t);
        let a = self.schedule.alpha(t);
        let data: Vec<f64> = mu
            .data()
            .iter()
            .zip(x_t.data())
            .map(|(&m, &v)| m + g * (v - a * m))
            .collect();
        Tensor::new(x_t.shape().to_vec(), data).expect("same shape")
    }
}
