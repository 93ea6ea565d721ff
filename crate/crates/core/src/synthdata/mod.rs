//! Procedural stimulus generation: shape masks, stationary textures, the
//! cue-conflict composer, parametric distortions, and dataset files.

mod benchmark;
mod distort;
mod io;
mod shapes;
mod textures;

pub use benchmark::{build_benchmark, BenchmarkConfig, LadderConfig, CONDITION_KINDS};
pub use distort::{apply_distortion, equalise_power, DistortionKind, DistortionSpec};
pub use io::{load_dataset, save_dataset, Dataset, DatasetMeta};
pub use shapes::{make_shape_mask, JitterRanges, ShapeClass, ShapeKind};
pub use textures::{make_texture, TextureClass, TextureKind};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{RngStream, Tensor};

/// Pixel quantum: generated stimuli snap to this grid so that exact-complement
/// transforms stay exact in binary floating point.
pub const PIXEL_QUANTUM: f64 = 1.0 / 4096.0;

/// Default canvas edge in pixels.
pub const DEFAULT_SIZE: usize = 32;

/// Default uniform background intensity (white).
pub const DEFAULT_BACKGROUND: f64 = 1.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("mask generation for {shape} kept degenerate coverage after {attempts} attempts")]
    DegenerateMask { shape: String, attempts: usize },
    #[error("canvas size {size} too small (minimum {min})")]
    CanvasTooSmall { size: usize, min: usize },
    #[error("distortion level {level} invalid for {kind}: {reason}")]
    BadLevel {
        kind: String,
        level: f64,
        reason: &'static str,
    },
    #[error("distortion kind {0} is not applied per-image")]
    UnsupportedKind(String),
    #[error("dataset file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset file malformed: {0}")]
    Malformed(String),
    #[error("dataset file version {got} unsupported (expected {expected})")]
    Version { got: u32, expected: u32 },
    #[error("benchmark config invalid: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Numeric(#[from] crate::numeric::NumericError),
}

/// One stimulus: an [H, W, 3] image in [0, 1] plus its provenance.
///
/// In congruent data `shape_label == texture_label`; cue-conflict stimuli have
/// differing labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub image: Tensor,
    pub shape_label: usize,
    pub texture_label: usize,
    pub condition: String,
    pub level: f64,
    pub image_id: String,
}

impl LabeledExample {
    pub fn size(&self) -> usize {
        self.image.shape()[0]
    }
}

/// Derivation labels `compose` uses for its internal sub-streams. Exposed so
/// callers can re-derive the same mask or texture for a given example stream.
pub const MASK_STREAM_LABEL: u64 = 1;
pub const TEXTURE_STREAM_LABEL: u64 = 2;
pub const ID_STREAM_LABEL: u64 = 3;

/// Snap a clipped intensity onto the pixel quantum grid.
#[inline]
pub(crate) fn snap_unit(v: f64) -> f64 {
    let clipped = v.clamp(0.0, 1.0);
    (clipped / PIXEL_QUANTUM).round() * PIXEL_QUANTUM
}

/// Paste `texture` inside `mask`, uniform `background` outside, and label the
/// result. Shape and texture jitter are drawn from sub-streams of `stream`
/// derived with [`MASK_STREAM_LABEL`] and [`TEXTURE_STREAM_LABEL`].
pub fn compose(
    shape: &ShapeClass,
    texture: &TextureClass,
    stream: &RngStream,
    size: usize,
    background: f64,
) -> Result<LabeledExample, DataError> {
    let mask = make_shape_mask(shape, &mut stream.derive(MASK_STREAM_LABEL), size)?;
    let tex = make_texture(texture, &mut stream.derive(TEXTURE_STREAM_LABEL), size);
    let bg = snap_unit(background);
    let mut image = Tensor::zeros(&[size, size, 3]);
    for y in 0..size {
        for x in 0..size {
            let inside = mask.at2(y, x) > 0.5;
            for c in 0..3 {
                let v = if inside { tex.at3(y, x, c) } else { bg };
                image.set3(y, x, c, v);
            }
        }
    }
    let token = stream.derive(ID_STREAM_LABEL).next_u64();
    let condition = if shape.id == texture.id {
        "clean"
    } else {
        "cue-conflict"
    };
    Ok(LabeledExample {
        image,
        shape_label: shape.id,
        texture_label: texture.id,
        condition: condition.to_string(),
        level: 0.0,
        image_id: format!("s{}t{}-{:016x}", shape.id, texture.id, token),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn congruent_compose_sets_equal_labels() {
        let shape = ShapeClass::new(2, ShapeKind::Triangle);
        let texture = TextureClass::new(2, TextureKind::Checker);
        let stream = RngStream::new(4).derive(0);
        let ex = compose(&shape, &texture, &stream, 32, 1.0).unwrap();
        assert_eq!(ex.shape_label, 2);
        assert_eq!(ex.texture_label, 2);
        assert_eq!(ex.condition, "clean");
        assert!(ex.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn conflict_compose_marks_cue_conflict() {
        let shape = ShapeClass::new(0, ShapeKind::Circle);
        let texture = TextureClass::new(3, TextureKind::Dots);
        let stream = RngStream::new(4).derive(1);
        let ex = compose(&shape, &texture, &stream, 32, 1.0).unwrap();
        assert_ne!(ex.shape_label, ex.texture_label);
        assert_eq!(ex.condition, "cue-conflict");
    }

    #[test]
    fn striped_pixels_stay_inside_the_disc() {
        let shape = ShapeClass::new(0, ShapeKind::Circle).with_jitter(JitterRanges::none());
        let texture = TextureClass::new(0, TextureKind::StripesFine);
        let stream = RngStream::new(9).derive(0);
        let ex = compose(&shape, &texture, &stream, 32, 1.0).unwrap();
        let mask = make_shape_mask(&shape, &mut stream.derive(MASK_STREAM_LABEL), 32).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                if mask.at2(y, x) < 0.5 {
                    for c in 0..3 {
                        assert_eq!(ex.image.at3(y, x, c), 1.0, "background at ({y},{x})");
                    }
                }
            }
        }
    }

    #[test]
    fn full_conflict_grid_has_56_cells_for_k8() {
        let mut count = 0;
        for s in 0..8 {
            for t in 0..8 {
                if s != t {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 56);
    }

    #[test]
    fn compose_is_deterministic() {
        let shape = ShapeClass::new(1, ShapeKind::Square);
        let texture = TextureClass::new(1, TextureKind::StripesCoarse);
        let stream = RngStream::new(7).derive(42);
        let a = compose(&shape, &texture, &stream, 32, 1.0).unwrap();
        let b = compose(&shape, &texture, &stream, 32, 1.0).unwrap();
        assert_eq!(a, b);
    }
}
