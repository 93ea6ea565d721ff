use serde::{Deserialize, Serialize};

use crate::diffusion::{Denoiser, NoiseSchedule};
use crate::numeric::{RngStream, Tensor};

use super::ClassifierError;

/// Time weighting applied to each Monte Carlo score term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "rate")]
pub enum ScoreWeight {
    /// The heuristic exp(-7t), emphasizing low-noise reconstructions.
    Exp7,
    Uniform,
    /// exp(-rate * t) for a caller-chosen positive rate.
    Custom(f64),
}

impl ScoreWeight {
    #[inline]
    pub fn weight(&self, t: f64) -> f64 {
        match self {
            ScoreWeight::Exp7 => (-7.0 * t).exp(),
            ScoreWeight::Uniform => 1.0,
            ScoreWeight::Custom(rate) => (-rate * t).exp(),
        }
    }

    fn validate(&self) -> Result<(), ClassifierError> {
        if let ScoreWeight::Custom(rate) = self {
            if !(*rate > 0.0) {
                return Err(ClassifierError::BadWeightRate(*rate));
            }
        }
        Ok(())
    }
}

/// Pruning rule: after `min_samples` paired draws, classes whose mean score
/// trails the best by more than `margin_factor` pooled standard errors stop
/// being scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneRule {
    pub margin_factor: f64,
    pub min_samples: usize,
}

impl Default for PruneRule {
    fn default() -> Self {
        Self {
            margin_factor: 3.0,
            min_samples: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionClassifierConfig {
    pub max_scores: usize,
    pub weight: ScoreWeight,
    pub pruning: Option<PruneRule>,
}

impl Default for DiffusionClassifierConfig {
    fn default() -> Self {
        Self {
            max_scores: 128,
            weight: ScoreWeight::Exp7,
            pruning: None,
        }
    }
}

/// Draws processed between pruning checks once the minimum is reached.
const PRUNE_CHUNK: usize = 16;

/// Classify by the weighted denoising score: repeatedly noise the image once
/// per draw, score every surviving class against the same latent, and return
/// the class with the lowest mean accumulated score. Ties break to the lowest
/// class id.
///
/// `x` must be preprocessed exactly like the denoiser's training data
/// (model space for the MLP denoiser). Scores are per-draw means of
/// `w(t) * mean((x - x0_hat)^2)`, so positive rescaling of the weight leaves
/// decisions unchanged.
pub fn classify_diffusion<D: Denoiser>(
    denoiser: &D,
    schedule: &NoiseSchedule,
    x: &Tensor,
    classes: &[usize],
    config: &DiffusionClassifierConfig,
    stream: &mut RngStream,
) -> Result<(usize, Vec<f64>), ClassifierError> {
    if classes.is_empty() {
        return Err(ClassifierError::EmptyClassSet);
    }
    if config.max_scores == 0 {
        return Err(ClassifierError::NoScores);
    }
    config.weight.validate()?;
    if let Some(rule) = &config.pruning {
        if config.max_scores < rule.min_samples {
            return Err(ClassifierError::MaxScoresTooSmall {
                max_scores: config.max_scores,
                n_min: rule.min_samples,
            });
        }
    }
    for &c in classes {
        if c >= denoiser.num_classes() {
            return Err(ClassifierError::BadClass {
                class: c,
                classes: denoiser.num_classes(),
            });
        }
    }

    let dim = x.len();
    let k = classes.len();
    // Draw all (t, eps) pairs up front, in draw order, so the noise is paired
    // across classes and independent of any pruning decisions.
    let mut ts = Vec::with_capacity(config.max_scores);
    let mut latents = Vec::with_capacity(config.max_scores * dim);
    for _ in 0..config.max_scores {
        let t = stream.next_f64();
        let (a, s) = (schedule.alpha(t), schedule.sigma(t));
        ts.push(t);
        for &xv in x.data() {
            let (e, _) = stream.next_gaussian_pair();
            latents.push(a * xv + s * e);
        }
    }
    let weights: Vec<f64> = ts.iter().map(|&t| config.weight.weight(t)).collect();

    let mut sums = vec![0.0f64; k];
    let mut sumsqs = vec![0.0f64; k];
    let mut counts = vec![0usize; k];
    let mut alive = vec![true; k];
    let mut drawn = 0usize;
    while drawn < config.max_scores {
        let block = match &config.pruning {
            Some(rule) if drawn == 0 => rule.min_samples,
            Some(_) => PRUNE_CHUNK.min(config.max_scores - drawn),
            None => config.max_scores,
        }
        .min(config.max_scores - drawn);
        let ts_block = &ts[drawn..drawn + block];
        let latents_block = &latents[drawn * dim..(drawn + block) * dim];
        for (ki, &class) in classes.iter().enumerate() {
            if !alive[ki] {
                continue;
            }
            let preds = denoiser.denoise_batch(latents_block, ts_block, class, dim);
            for (r, pred_row) in preds.chunks(dim).enumerate() {
                let mut err = 0.0;
                for (p, xv) in pred_row.iter().zip(x.data()) {
                    err += (p - xv) * (p - xv);
                }
                let score = weights[drawn + r] * err / dim as f64;
                sums[ki] += score;
                sumsqs[ki] += score * score;
            }
            counts[ki] += block;
        }
        drawn += block;
        if let Some(rule) = &config.pruning {
            if drawn >= rule.min_samples && drawn < config.max_scores {
                prune(&mut alive, &sums, &sumsqs, drawn, rule);
            }
        }
    }

    // Mean accumulated score per class; pruned classes keep the mean of the
    // draws they actually saw.
    let mut scores = vec![0.0f64; k];
    for ki in 0..k {
        scores[ki] = sums[ki] / counts[ki] as f64;
    }
    let mut best = 0usize;
    for ki in 1..k {
        let better = scores[ki] < scores[best]
            || (scores[ki] == scores[best] && classes[ki] < classes[best]);
        if better {
            best = ki;
        }
    }
    Ok((classes[best], scores))
}

fn prune(alive: &mut [bool], sums: &[f64], sumsqs: &[f64], n: usize, rule: &PruneRule) {
    let nf = n as f64;
    let mut best = f64::INFINITY;
    let mut pooled_var = 0.0;
    let mut survivors = 0usize;
    for ki in 0..alive.len() {
        if !alive[ki] {
            continue;
        }
        let mean = sums[ki] / nf;
        best = best.min(mean);
        let var = (sumsqs[ki] - sums[ki] * sums[ki] / nf) / (nf - 1.0).max(1.0);
        pooled_var += var.max(0.0);
        survivors += 1;
    }
    if survivors <= 1 {
        return;
    }
    let se = (pooled_var / survivors as f64 / nf).sqrt();
    for ki in 0..alive.len() {
        if alive[ki] {
            let mean = sums[ki] / nf;
            if mean - best > rule.margin_factor * se {
                alive[ki] = false;
            }
        }
    }
    // Never prune everything: the best class always survives.
    if alive.iter().all(|a| !a) {
        unreachable!("best class survives by construction");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::Denoiser;

    /// Ignores class entirely; with paired noise all class scores tie.
    struct ClassBlind;

    impl Denoiser for ClassBlind {
        fn num_classes(&self) -> usize {
            4
        }
        fn denoise(&self, x_t: &Tensor, _class: usize, _t: f64) -> Tensor {
            x_t.map(|v| 0.5 * v)
        }
    }

    /// Pulls toward a fixed per-class constant.
    struct ConstPull;

    impl Denoiser for ConstPull {
        fn num_classes(&self) -> usize {
            3
        }
        fn denoise(&self, x_t: &Tensor, class: usize, _t: f64) -> Tensor {
            Tensor::filled(x_t.shape(), class as f64)
        }
    }

    #[test]
    fn single_class_is_trivial() {
        let x = Tensor::filled(&[8], 0.3);
        let cfg = DiffusionClassifierConfig {
            max_scores: 4,
            ..Default::default()
        };
        let (pred, scores) = classify_diffusion(
            &ClassBlind,
            &NoiseSchedule,
            &x,
            &[2],
            &cfg,
            &mut RngStream::new(1).derive(0),
        )
        .unwrap();
        assert_eq!(pred, 2);
        assert_eq!(scores.len(), 1);
    }

    #[test]
    fn class_blind_denoiser_ties_to_lowest_id() {
        let x = RngStream::new(5).derive(0).sample_gaussian(&[16]);
        let cfg = DiffusionClassifierConfig {
            max_scores: 8,
            weight: ScoreWeight::Uniform,
            pruning: None,
        };
        let (pred, scores) = classify_diffusion(
            &ClassBlind,
            &NoiseSchedule,
            &x,
            &[0, 1, 2, 3],
            &cfg,
            &mut RngStream::new(2).derive(0),
        )
        .unwrap();
        assert_eq!(pred, 0);
        for s in &scores[1..] {
            assert_eq!(*s, scores[0], "paired noise must give exact ties");
        }
    }

    #[test]
    fn nearest_constant_wins() {
        let x = Tensor::filled(&[12], 2.0);
        let cfg = DiffusionClassifierConfig {
            max_scores: 32,
            weight: ScoreWeight::Uniform,
            pruning: None,
        };
        let (pred, _) = classify_diffusion(
            &ConstPull,
            &NoiseSchedule,
            &x,
            &[0, 1, 2],
            &cfg,
            &mut RngStream::new(3).derive(0),
        )
        .unwrap();
        assert_eq!(pred, 2);
    }

    #[test]
    fn decisions_are_invariant_under_weight_rescaling() {
        // exp(-7t) and 4*exp(-7t) must agree; realize the scaling through an
        // equivalent custom rate pair instead: scores scale jointly, argmin
        // fixed. Compare Exp7 against Custom(7.0) with identical streams.
        let x = RngStream::new(9).derive(1).sample_gaussian(&[10]);
        let base = DiffusionClassifierConfig {
            max_scores: 16,
            weight: ScoreWeight::Exp7,
            pruning: None,
        };
        let custom = DiffusionClassifierConfig {
            weight: ScoreWeight::Custom(7.0),
            ..base
        };
        let (pa, sa) = classify_diffusion(
            &ConstPull,
            &NoiseSchedule,
            &x,
            &[0, 1, 2],
            &base,
            &mut RngStream::new(4).derive(0),
        )
        .unwrap();
        let (pb, sb) = classify_diffusion(
            &ConstPull,
            &NoiseSchedule,
            &x,
            &[0, 1, 2],
            &custom,
            &mut RngStream::new(4).derive(0),
        )
        .unwrap();
        assert_eq!(pa, pb);
        assert_eq!(sa, sb);
    }

    #[test]
    fn weight_function_reference_values() {
        let w = ScoreWeight::Exp7;
        assert_eq!(w.weight(0.0), 1.0);
        assert!((w.weight(1.0) - 9.1188e-4).abs() < 1e-7);
        assert_eq!(w.weight(1.0), (-7.0f64).exp());
        let mut prev = f64::INFINITY;
        for i in 0..=20 {
            let v = w.weight(i as f64 / 20.0);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn pruning_preserves_easy_decisions() {
        let x = Tensor::filled(&[12], 2.0);
        let with = DiffusionClassifierConfig {
            max_scores: 64,
            weight: ScoreWeight::Uniform,
            pruning: Some(PruneRule::default()),
        };
        let without = DiffusionClassifierConfig {
            pruning: None,
            ..with
        };
        let (pa, _) = classify_diffusion(
            &ConstPull,
            &NoiseSchedule,
            &x,
            &[0, 1, 2],
            &with,
            &mut RngStream::new(6).derive(0),
        )
        .unwrap();
        let (pb, _) = classify_diffusion(
            &ConstPull,
            &NoiseSchedule,
            &x,
            &[0, 1, 2],
            &without,
            &mut RngStream::new(6).derive(0),
        )
        .unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn pruning_config_is_validated() {
        let x = Tensor::filled(&[4], 0.0);
        let cfg = DiffusionClassifierConfig {
            max_scores: 8,
            weight: ScoreWeight::Uniform,
            pruning: Some(PruneRule {
                margin_factor: 3.0,
                min_samples: 16,
            }),
        };
        assert!(matches!(
            classify_diffusion(
                &ClassBlind,
                &NoiseSchedule,
                &x,
                &[0, 1],
                &cfg,
                &mut RngStream::new(0).derive(0)
            ),
            Err(ClassifierError::MaxScoresTooSmall { .. })
        ));
    }

    #[test]
    fn empty_class_set_is_rejected() {
        let x = Tensor::filled(&[4], 0.0);
        assert!(matches!(
            classify_diffusion(
                &ClassBlind,
                &NoiseSchedule,
                &x,
                &[],
                &DiffusionClassifierConfig::default(),
                &mut RngStream::new(0).derive(0)
            ),
            Err(ClassifierError::EmptyClassSet)
        ));
    }
}
