use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::numeric::RngStream;

use super::{
    apply_distortion, compose, equalise_power, DataError, DistortionKind, DistortionSpec,
    LabeledExample, ShapeClass, ShapeKind, TextureClass, TextureKind, DEFAULT_BACKGROUND,
    DEFAULT_SIZE,
};

/// Condition names the benchmark knows how to build, in canonical order.
pub const CONDITION_KINDS: [&str; 13] = [
    "clean",
    "cue-conflict",
    "silhouette",
    "edge",
    "grayscale",
    "false-colour",
    "contrast",
    "uniform-noise",
    "low-pass",
    "high-pass",
    "phase-noise",
    "power-equalisation",
    "rotation",
];

fn kind_for(name: &str) -> Option<DistortionKind> {
    match name {
        "grayscale" => Some(DistortionKind::Grayscale),
        "false-colour" => Some(DistortionKind::FalseColour),
        "contrast" => Some(DistortionKind::Contrast),
        "uniform-noise" => Some(DistortionKind::UniformNoise),
        "low-pass" => Some(DistortionKind::LowPass),
        "high-pass" => Some(DistortionKind::HighPass),
        "phase-noise" => Some(DistortionKind::PhaseNoise),
        "rotation" => Some(DistortionKind::Rotation),
        _ => None,
    }
}

/// Level ladders for the parametric conditions, mildest first. For high-pass
/// the ladder runs from no filtering (0) through decreasing blur scale, which
/// is increasingly destructive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LadderConfig {
    pub contrast: Vec<f64>,
    pub uniform_noise: Vec<f64>,
    pub low_pass: Vec<f64>,
    pub high_pass: Vec<f64>,
    pub phase_noise: Vec<f64>,
    pub rotation: Vec<f64>,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            contrast: vec![1.0, 0.5, 0.25, 0.12],
            uniform_noise: vec![0.0, 0.1, 0.2, 0.35],
            low_pass: vec![0.0, 1.0, 2.0, 4.0],
            high_pass: vec![0.0, 3.0, 1.5, 0.75],
            phase_noise: vec![0.0, 30.0, 60.0, 120.0],
            rotation: vec![0.0, 90.0, 180.0, 270.0],
        }
    }
}

impl LadderConfig {
    fn for_condition(&self, name: &str) -> Option<&[f64]> {
        match name {
            "contrast" => Some(&self.contrast),
            "uniform-noise" => Some(&self.uniform_noise),
            "low-pass" => Some(&self.low_pass),
            "high-pass" => Some(&self.high_pass),
            "phase-noise" => Some(&self.phase_noise),
            "rotation" => Some(&self.rotation),
            _ => None,
        }
    }
}

/// Dataset shape: class count, canvas, examples per class per condition, the
/// condition list, and the level ladders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub classes: usize,
    pub size: usize,
    pub examples_per_class: usize,
    /// Per-condition override of `examples_per_class`. Derived conditions
    /// (everything except clean and cue-conflict) must not exceed clean's
    /// count since they reuse its base images.
    pub condition_examples: BTreeMap<String, usize>,
    pub conditions: Vec<String>,
    pub background: f64,
    pub ladders: LadderConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            classes: 8,
            size: DEFAULT_SIZE,
            examples_per_class: 25,
            condition_examples: BTreeMap::new(),
            conditions: CONDITION_KINDS.iter().map(|s| s.to_string()).collect(),
            background: DEFAULT_BACKGROUND,
            ladders: LadderConfig::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn n_for(&self, condition: &str) -> usize {
        self.condition_examples
            .get(condition)
            .copied()
            .unwrap_or(self.examples_per_class)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(2..=8).contains(&self.classes) {
            return Err(DataError::BadConfig(format!(
                "classes must be in 2..=8, got {}",
                self.classes
            )));
        }
        if self.conditions.is_empty() {
            return Err(DataError::BadConfig("no conditions configured".into()));
        }
        for c in &self.conditions {
            if !CONDITION_KINDS.contains(&c.as_str()) {
                return Err(DataError::BadConfig(format!("unknown condition '{c}'")));
            }
        }
        let n_clean = self.n_for("clean");
        for c in &self.conditions {
            if c != "clean" && c != "cue-conflict" && self.n_for(c) > n_clean {
                return Err(DataError::BadConfig(format!(
                    "condition '{c}' asks for {} examples per class but reuses the clean base of {}",
                    self.n_for(c),
                    n_clean
                )));
            }
        }
        for name in ["contrast", "uniform-noise", "low-pass", "high-pass", "phase-noise", "rotation"] {
            let ladder = self.ladders.for_condition(name).expect("known");
            if self.conditions.iter().any(|c| c == name) && ladder.is_empty() {
                return Err(DataError::BadConfig(format!("empty ladder for '{name}'")));
            }
        }
        Ok(())
    }

    pub fn shape_classes(&self) -> Vec<ShapeClass> {
        (0..self.classes)
            .map(|i| ShapeClass::new(i, ShapeKind::ALL[i]))
            .collect()
    }

    pub fn texture_classes(&self) -> Vec<TextureClass> {
        (0..self.classes)
            .map(|i| TextureClass::new(i, TextureKind::ALL[i]))
            .collect()
    }
}

fn check_unique_ids(condition: &str, examples: &[LabeledExample]) -> Result<(), DataError> {
    let mut seen: HashSet<(u64, &str)> = HashSet::new();
    for ex in examples {
        if !seen.insert((ex.level.to_bits(), ex.image_id.as_str())) {
            return Err(DataError::BadConfig(format!(
                "duplicate image id '{}' in condition '{condition}' level {}",
                ex.image_id, ex.level
            )));
        }
    }
    Ok(())
}

/// Builds the full deterministic evaluation suite: a clean congruent set,
/// cue-conflict stimuli, silhouette/edge reductions, and the parametric
/// distortion ladders applied to the clean base.
pub fn build_benchmark(
    seed: u64,
    config: &BenchmarkConfig,
) -> Result<BTreeMap<String, Vec<LabeledExample>>, DataError> {
    config.validate()?;
    let root = RngStream::new(seed).derive_str("benchmark");
    let shapes = config.shape_classes();
    let textures = config.texture_classes();
    let k = config.classes;

    // Clean base: also the source for every derived condition.
    let n_clean = config.n_for("clean");
    let clean_stream = root.derive_str("clean");
    let mut clean: Vec<LabeledExample> = Vec::with_capacity(k * n_clean);
    for class in 0..k {
        for i in 0..n_clean {
            let stream = clean_stream.derive(class as u64).derive(i as u64);
            clean.push(compose(
                &shapes[class],
                &textures[class],
                &stream,
                config.size,
                config.background,
            )?);
        }
    }

    let mut suite: BTreeMap<String, Vec<LabeledExample>> = BTreeMap::new();
    for condition in &config.conditions {
        let n = config.n_for(condition);
        let take_base = |n: usize| -> Vec<&LabeledExample> {
            // First n per class, preserving class-major order.
            let mut out = Vec::with_capacity(k * n);
            for class in 0..k {
                for i in 0..n {
                    out.push(&clean[class * n_clean + i]);
                }
            }
            out
        };
        let examples: Vec<LabeledExample> = match condition.as_str() {
            "clean" => take_base(n).into_iter().cloned().collect(),
            "cue-conflict" => {
                let stream = root.derive_str("cue-conflict");
                let mut out = Vec::with_capacity(k * n);
                for shape_class in 0..k {
                    for i in 0..n {
                        // Cycle through the foreign textures.
                        let texture_class = (shape_class + 1 + (i % (k - 1))) % k;
                        let s = stream.derive(shape_class as u64).derive(i as u64);
                        out.push(compose(
                            &shapes[shape_class],
                            &textures[texture_class],
                            &s,
                            config.size,
                            config.background,
                        )?);
                    }
                }
                out
            }
            "silhouette" | "edge" => {
                let kind = if condition == "silhouette" {
                    DistortionKind::Silhouette
                } else {
                    DistortionKind::Edge
                };
                let spec = DistortionSpec::new(kind, 0.0);
                let mut stream = root.derive_str(condition);
                take_base(n)
                    .into_iter()
                    .map(|ex| apply_distortion(ex, &spec, &mut stream))
                    .collect::<Result<_, _>>()?
            }
            "power-equalisation" => {
                let base: Vec<LabeledExample> = take_base(n).into_iter().cloned().collect();
                equalise_power(&base)?
            }
            name => {
                let kind = kind_for(name).expect("validated condition");
                let ladder: Vec<f64> = match kind {
                    DistortionKind::Grayscale | DistortionKind::FalseColour => vec![0.0],
                    _ => config
                        .ladders
                        .for_condition(name)
                        .map(|l| l.to_vec())
                        .unwrap_or_else(|| vec![0.0]),
                };
                let spec_base = DistortionSpec::with_ladder(kind, ladder.clone());
                let mut out = Vec::with_capacity(ladder.len() * k * n);
                for (li, &level) in ladder.iter().enumerate() {
                    let spec = spec_base.at_level(level);
                    for ex in take_base(n) {
                        let mut s = root
                            .derive_str(name)
                            .derive(li as u64)
                            .derive_str(&ex.image_id);
                        out.push(apply_distortion(ex, &spec, &mut s)?);
                    }
                }
                out
            }
        };
        check_unique_ids(condition, &examples)?;
        suite.insert(condition.clone(), examples);
    }
    Ok(suite)
}

/// Congruent training set, drawn from a stream namespace disjoint from the
/// benchmark suite.
pub fn build_training_set(
    seed: u64,
    config: &BenchmarkConfig,
    per_class: usize,
) -> Result<Vec<LabeledExample>, DataError> {
    let root = RngStream::new(seed).derive_str("train");
    let shapes = config.shape_classes();
    let textures = config.texture_classes();
    let mut out = Vec::with_capacity(config.classes * per_class);
    for class in 0..config.classes {
        for i in 0..per_class {
            let stream = root.derive(class as u64).derive(i as u64);
            out.push(compose(
                &shapes[class],
                &textures[class],
                &stream,
                config.size,
                config.background,
            )?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> BenchmarkConfig {
        BenchmarkConfig {
            classes: 3,
            examples_per_class: 2,
            conditions: vec![
                "clean".into(),
                "cue-conflict".into(),
                "low-pass".into(),
                "rotation".into(),
            ],
            ..BenchmarkConfig::default()
        }
    }

    #[test]
    fn default_counts_match_class_grid() {
        let config = BenchmarkConfig {
            conditions: vec!["clean".into()],
            ..BenchmarkConfig::default()
        };
        assert_eq!(config.classes, 8);
        assert_eq!(config.examples_per_class, 25);
        let suite = build_benchmark(1, &config).unwrap();
        assert_eq!(suite["clean"].len(), 200);
    }

    #[test]
    fn builds_are_deterministic() {
        let config = small_config();
        let a = build_benchmark(7, &config).unwrap();
        let b = build_benchmark(7, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn low_pass_identity_level_equals_clean() {
        let config = small_config();
        let suite = build_benchmark(3, &config).unwrap();
        let levels: std::collections::BTreeSet<u64> = suite["low-pass"]
            .iter()
            .map(|e| e.level.to_bits())
            .collect();
        assert_eq!(levels.len(), 4);
        let clean = &suite["clean"];
        for ex in suite["low-pass"].iter().filter(|e| e.level == 0.0) {
            let base = clean
                .iter()
                .find(|c| c.image_id == ex.image_id)
                .expect("shared base id");
            assert_eq!(base.image, ex.image);
        }
    }

    #[test]
    fn conflict_labels_always_differ() {
        let config = small_config();
        let suite = build_benchmark(11, &config).unwrap();
        for ex in &suite["cue-conflict"] {
            assert_ne!(ex.shape_label, ex.texture_label);
        }
        // Every shape class appears n times.
        for class in 0..config.classes {
            let count = suite["cue-conflict"]
                .iter()
                .filter(|e| e.shape_label == class)
                .count();
            assert_eq!(count, config.examples_per_class);
        }
    }

    #[test]
    fn unknown_condition_is_rejected() {
        let config = BenchmarkConfig {
            conditions: vec!["sketch".into()],
            ..BenchmarkConfig::default()
        };
        assert!(matches!(
            build_benchmark(1, &config),
            Err(DataError::BadConfig(_))
        ));
    }

    #[test]
    fn oversized_derived_condition_is_rejected() {
        let mut config = small_config();
        config
            .condition_examples
            .insert("low-pass".into(), config.examples_per_class + 1);
        assert!(matches!(
            build_benchmark(1, &config),
            Err(DataError::BadConfig(_))
        ));
    }

    #[test]
    fn training_set_is_congruent_and_disjoint_from_benchmark() {
        let config = small_config();
        let train = build_training_set(5, &config, 2).unwrap();
        assert_eq!(train.len(), 6);
        for ex in &train {
            assert_eq!(ex.shape_label, ex.texture_label);
        }
        let suite = build_benchmark(5, &config).unwrap();
        let bench_ids: std::collections::BTreeSet<&str> = suite["clean"]
            .iter()
            .map(|e| e.image_id.as_str())
            .collect();
        for ex in &train {
            assert!(!bench_ids.contains(ex.image_id.as_str()));
        }
    }
}
