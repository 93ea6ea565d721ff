use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::numeric::{dft2, idft2, RngStream, Spectrum, Tensor};

use super::{DataError, LabeledExample};

/// Distortion families. `CueConflict` is produced by the composer, not by
/// [`apply_distortion`]; `None` names the clean condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistortionKind {
    Grayscale,
    FalseColour,
    Contrast,
    UniformNoise,
    LowPass,
    HighPass,
    PhaseNoise,
    PowerEqualisation,
    Rotation,
    Silhouette,
    Edge,
    CueConflict,
    None,
}

impl DistortionKind {
    pub fn name(&self) -> &'static str {
        match self {
            DistortionKind::Grayscale => "grayscale",
            DistortionKind::FalseColour => "false-colour",
            DistortionKind::Contrast => "contrast",
            DistortionKind::UniformNoise => "uniform-noise",
            DistortionKind::LowPass => "low-pass",
            DistortionKind::HighPass => "high-pass",
            DistortionKind::PhaseNoise => "phase-noise",
            DistortionKind::PowerEqualisation => "power-equalisation",
            DistortionKind::Rotation => "rotation",
            DistortionKind::Silhouette => "silhouette",
            DistortionKind::Edge => "edge",
            DistortionKind::CueConflict => "cue-conflict",
            DistortionKind::None => "clean",
        }
    }

    /// Level at which the transform leaves pixels untouched, when one exists.
    pub fn identity_level(&self) -> Option<f64> {
        match self {
            DistortionKind::Contrast => Some(1.0),
            DistortionKind::UniformNoise
            | DistortionKind::LowPass
            | DistortionKind::HighPass
            | DistortionKind::PhaseNoise
            | DistortionKind::Rotation => Some(0.0),
            DistortionKind::None => Some(0.0),
            _ => Option::None,
        }
    }
}

/// A distortion with its strength and the ladder of strengths the benchmark
/// sweeps, ordered mildest to strongest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub level: f64,
    pub ladder: Vec<f64>,
}

impl DistortionSpec {
    pub fn new(kind: DistortionKind, level: f64) -> Self {
        Self {
            kind,
            level,
            ladder: vec![level],
        }
    }

    pub fn with_ladder(kind: DistortionKind, ladder: Vec<f64>) -> Self {
        let level = ladder.first().copied().unwrap_or(0.0);
        Self {
            kind,
            level,
            ladder,
        }
    }

    pub fn at_level(&self, level: f64) -> Self {
        Self {
            kind: self.kind,
            level,
            ladder: self.ladder.clone(),
        }
    }
}

fn validate_level(spec: &DistortionSpec) -> Result<(), DataError> {
    if spec.level < 0.0 || !spec.level.is_finite() {
        return Err(DataError::BadLevel {
            kind: spec.kind.name().to_string(),
            level: spec.level,
            reason: "level must be finite and non-negative",
        });
    }
    if spec.kind == DistortionKind::Rotation && spec.level.rem_euclid(90.0) != 0.0 {
        return Err(DataError::BadLevel {
            kind: spec.kind.name().to_string(),
            level: spec.level,
            reason: "rotation is grid-exact and limited to multiples of 90 degrees",
        });
    }
    if spec.kind == DistortionKind::Contrast && spec.level > 1.0 {
        return Err(DataError::BadLevel {
            kind: spec.kind.name().to_string(),
            level: spec.level,
            reason: "contrast scale is at most 1",
        });
    }
    Ok(())
}

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// Background detection threshold for silhouette/edge mask recovery; composed
/// textures stay below this, the white background sits at 1.
const BG_THRESHOLD: f64 = 0.97;

fn for_each_pixel(image: &mut Tensor, f: impl Fn(f64, f64, f64) -> (f64, f64, f64)) {
    let size = image.shape()[0];
    for y in 0..size {
        for x in 0..size {
            let (r, g, b) = (image.at3(y, x, 0), image.at3(y, x, 1), image.at3(y, x, 2));
            let (nr, ng, nb) = f(r, g, b);
            image.set3(y, x, 0, nr.clamp(0.0, 1.0));
            image.set3(y, x, 1, ng.clamp(0.0, 1.0));
            image.set3(y, x, 2, nb.clamp(0.0, 1.0));
        }
    }
}

fn channel(image: &Tensor, c: usize) -> Tensor {
    let size = image.shape()[0];
    let mut out = Tensor::zeros(&[size, size]);
    for y in 0..size {
        for x in 0..size {
            out.set2(y, x, image.at3(y, x, c));
        }
    }
    out
}

fn set_channel(image: &mut Tensor, c: usize, data: &Tensor) {
    let size = image.shape()[0];
    for y in 0..size {
        for x in 0..size {
            image.set3(y, x, c, data.at2(y, x).clamp(0.0, 1.0));
        }
    }
}

/// Separable Gaussian blur, kernel truncated at radius ceil(3 sigma) and
/// renormalized; borders reflect.
fn gaussian_blur(channel: &Tensor, sigma: f64) -> Tensor {
    if sigma <= 0.0 {
        return channel.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for i in -radius..=radius {
        kernel.push((-((i * i) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= norm;
    }
    let n = channel.shape()[0] as isize;
    let m = channel.shape()[1] as isize;
    let reflect = |idx: isize, len: isize| -> usize {
        let mut i = idx;
        if i < 0 {
            i = -i - 1;
        }
        if i >= len {
            i = 2 * len - 1 - i;
        }
        i.clamp(0, len - 1) as usize
    };
    let mut horiz = Tensor::zeros(&[n as usize, m as usize]);
    for y in 0..n {
        for x in 0..m {
            let mut acc = 0.0;
            for (ki, w) in kernel.iter().enumerate() {
                let sx = reflect(x + ki as isize - radius, m);
                acc += w * channel.at2(y as usize, sx);
            }
            horiz.set2(y as usize, x as usize, acc);
        }
    }
    let mut out = Tensor::zeros(&[n as usize, m as usize]);
    for y in 0..n {
        for x in 0..m {
            let mut acc = 0.0;
            for (ki, w) in kernel.iter().enumerate() {
                let sy = reflect(y + ki as isize - radius, n);
                acc += w * horiz.at2(sy, x as usize);
            }
            out.set2(y as usize, x as usize, acc);
        }
    }
    out
}

/// Add phase noise U(-phi, phi) preserving conjugate symmetry. Self-conjugate
/// bins (DC and Nyquist combinations) stay untouched so the spectrum remains
/// real where it must.
fn phase_noise_channel(ch: &Tensor, phi: f64, stream: &mut RngStream) -> Tensor {
    let spec = dft2(ch).expect("2-d channel");
    let (h, w) = (spec.height(), spec.width());
    let mut out: Spectrum = spec.clone();
    for u in 0..h {
        for v in 0..w {
            let mu = (h - u) % h;
            let mv = (w - v) % w;
            if (u, v) == (mu, mv) {
                continue;
            }
            if (u, v) < (mu, mv) {
                let theta = stream.next_range(-phi, phi);
                let rot = Complex64::new(theta.cos(), theta.sin());
                out.set(u, v, spec.at(u, v) * rot);
                out.set(mu, mv, spec.at(mu, mv) * rot.conj());
            }
        }
    }
    idft2(&out).expect("symmetry preserved")
}

fn amplitude_of(ch: &Tensor) -> Vec<f64> {
    dft2(ch)
        .expect("2-d channel")
        .data()
        .iter()
        .map(|c| c.norm())
        .collect()
}

fn apply_amplitude(ch: &Tensor, target: &[f64]) -> Tensor {
    let spec = dft2(ch).expect("2-d channel");
    let (h, w) = (spec.height(), spec.width());
    let mut out = spec.clone();
    for u in 0..h {
        for v in 0..w {
            let f = spec.at(u, v);
            let mag = f.norm();
            let t = target[u * w + v];
            let scaled = if mag > 1e-300 {
                f * (t / mag)
            } else {
                Complex64::new(t, 0.0)
            };
            out.set(u, v, scaled);
        }
    }
    // Replacing amplitudes can break exact symmetry in the zero-magnitude
    // fallback; mirror the canonical half to keep the inverse real.
    let mut sym = out.clone();
    for u in 0..h {
        for v in 0..w {
            let mu = (h - u) % h;
            let mv = (w - v) % w;
            if (u, v) < (mu, mv) {
                sym.set(mu, mv, out.at(u, v).conj());
            } else if (u, v) == (mu, mv) {
                sym.set(u, v, Complex64::new(out.at(u, v).re, 0.0));
            }
        }
    }
    idft2(&sym).expect("symmetrized")
}

fn recover_mask(image: &Tensor) -> Tensor {
    let size = image.shape()[0];
    let mut mask = Tensor::zeros(&[size, size]);
    for y in 0..size {
        for x in 0..size {
            let bg = (0..3).all(|c| image.at3(y, x, c) >= BG_THRESHOLD);
            if !bg {
                mask.set2(y, x, 1.0);
            }
        }
    }
    mask
}

fn rotate_quarter_turns(image: &Tensor, turns: usize) -> Tensor {
    let size = image.shape()[0];
    let mut out = image.clone();
    for _ in 0..turns % 4 {
        let prev = out.clone();
        for y in 0..size {
            for x in 0..size {
                for c in 0..3 {
                    // Counter-clockwise quarter turn.
                    out.set3(size - 1 - x, y, c, prev.at3(y, x, c));
                }
            }
        }
    }
    out
}

/// Applies one parametric distortion, preserving labels and image id while
/// updating the condition and level fields. Randomized kinds (uniform noise,
/// phase noise) draw from `stream`; deterministic kinds ignore it.
///
/// Identity levels short-circuit to a pixel-exact copy.
pub fn apply_distortion(
    example: &LabeledExample,
    spec: &DistortionSpec,
    stream: &mut RngStream,
) -> Result<LabeledExample, DataError> {
    if spec.kind == DistortionKind::CueConflict {
        return Err(DataError::UnsupportedKind(
            DistortionKind::CueConflict.name().to_string(),
        ));
    }
    validate_level(spec)?;
    let mut out = example.clone();
    out.condition = spec.kind.name().to_string();
    out.level = spec.level;
    if spec.kind.identity_level() == Some(spec.level)
        || (spec.kind == DistortionKind::Rotation && spec.level.rem_euclid(360.0) == 0.0)
    {
        return Ok(out);
    }
    match spec.kind {
        DistortionKind::None => {}
        DistortionKind::Grayscale => {
            for_each_pixel(&mut out.image, |r, g, b| {
                if r == g && g == b {
                    (r, g, b)
                } else {
                    let l = LUMA_R * r + LUMA_G * g + LUMA_B * b;
                    (l, l, l)
                }
            });
        }
        DistortionKind::FalseColour => {
            for_each_pixel(&mut out.image, |r, g, b| (1.0 - r, 1.0 - g, 1.0 - b));
        }
        DistortionKind::Contrast => {
            let c = spec.level;
            for_each_pixel(&mut out.image, |r, g, b| {
                (
                    0.5 + c * (r - 0.5),
                    0.5 + c * (g - 0.5),
                    0.5 + c * (b - 0.5),
                )
            });
        }
        DistortionKind::UniformNoise => {
            let wd = spec.level;
            let size = out.image.shape()[0];
            for y in 0..size {
                for x in 0..size {
                    for c in 0..3 {
                        let v = out.image.at3(y, x, c) + stream.next_range(-wd, wd);
                        out.image.set3(y, x, c, v.clamp(0.0, 1.0));
                    }
                }
            }
        }
        DistortionKind::LowPass => {
            for c in 0..3 {
                let blurred = gaussian_blur(&channel(&out.image, c), spec.level);
                set_channel(&mut out.image, c, &blurred);
            }
        }
        DistortionKind::HighPass => {
            for c in 0..3 {
                let ch = channel(&out.image, c);
                let blurred = gaussian_blur(&ch, spec.level);
                let mut hp = Tensor::zeros(ch.shape());
                for i in 0..ch.len() {
                    hp.data_mut()[i] = ch.data()[i] - blurred.data()[i] + 0.5;
                }
                set_channel(&mut out.image, c, &hp);
            }
        }
        DistortionKind::PhaseNoise => {
            let phi = spec.level.to_radians();
            for c in 0..3 {
                let noisy = phase_noise_channel(&channel(&out.image, c), phi, stream);
                set_channel(&mut out.image, c, &noisy);
            }
        }
        DistortionKind::PowerEqualisation => {
            // Without a dataset context the reference amplitude is the
            // image's own spectrum; see `equalise_power` for the batch form.
            for c in 0..3 {
                let ch = channel(&out.image, c);
                let amp = amplitude_of(&ch);
                let eq = apply_amplitude(&ch, &amp);
                set_channel(&mut out.image, c, &eq);
            }
        }
        DistortionKind::Rotation => {
            let turns = (spec.level.rem_euclid(360.0) / 90.0) as usize;
            out.image = rotate_quarter_turns(&out.image, turns);
        }
        DistortionKind::Silhouette => {
            let mask = recover_mask(&out.image);
            let size = out.image.shape()[0];
            for y in 0..size {
                for x in 0..size {
                    let v = if mask.at2(y, x) > 0.5 { 0.0 } else { 1.0 };
                    for c in 0..3 {
                        out.image.set3(y, x, c, v);
                    }
                }
            }
        }
        DistortionKind::Edge => {
            let mask = recover_mask(&out.image);
            let size = out.image.shape()[0];
            let mut boundary = Tensor::zeros(&[size, size]);
            for y in 0..size {
                for x in 0..size {
                    if mask.at2(y, x) < 0.5 {
                        continue;
                    }
                    let mut edge = false;
                    for (dy, dx) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                        let (ny, nx) = (y as isize + dy, x as isize + dx);
                        if ny < 0 || nx < 0 || ny >= size as isize || nx >= size as isize {
                            edge = true;
                        } else if mask.at2(ny as usize, nx as usize) < 0.5 {
                            edge = true;
                        }
                    }
                    if edge {
                        boundary.set2(y, x, 1.0);
                    }
                }
            }
            for y in 0..size {
                for x in 0..size {
                    let v = if boundary.at2(y, x) > 0.5 { 0.0 } else { 1.0 };
                    for c in 0..3 {
                        out.image.set3(y, x, c, v);
                    }
                }
            }
        }
        DistortionKind::CueConflict => unreachable!("rejected above"),
    }
    Ok(out)
}

/// Dataset-level power equalisation: every image's per-channel amplitude
/// spectrum is replaced by the dataset mean amplitude, keeping phases.
pub fn equalise_power(examples: &[LabeledExample]) -> Result<Vec<LabeledExample>, DataError> {
    if examples.is_empty() {
        return Ok(Vec::new());
    }
    let size = examples[0].size();
    let mut mean_amp = vec![vec![0.0f64; size * size]; 3];
    for ex in examples {
        for c in 0..3 {
            let amp = amplitude_of(&channel(&ex.image, c));
            for (m, a) in mean_amp[c].iter_mut().zip(&amp) {
                *m += a;
            }
        }
    }
    for ch_amp in &mut mean_amp {
        for v in ch_amp.iter_mut() {
            *v /= examples.len() as f64;
        }
    }
    let mut out = Vec::with_capacity(examples.len());
    for ex in examples {
        let mut eq = ex.clone();
        eq.condition = DistortionKind::PowerEqualisation.name().to_string();
        eq.level = 1.0;
        for c in 0..3 {
            let t = apply_amplitude(&channel(&ex.image, c), &mean_amp[c]);
            set_channel(&mut eq.image, c, &t);
        }
        out.push(eq);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{compose, ShapeClass, ShapeKind, TextureClass, TextureKind};

    fn example() -> LabeledExample {
        let shape = ShapeClass::new(0, ShapeKind::Circle);
        let texture = TextureClass::new(0, TextureKind::Checker);
        compose(&shape, &texture, &RngStream::new(17).derive(0), 32, 1.0).unwrap()
    }

    fn stream() -> RngStream {
        RngStream::new(99).derive(1)
    }

    #[test]
    fn identity_levels_are_pixel_exact() {
        let ex = example();
        let identity_specs = [
            DistortionSpec::new(DistortionKind::Contrast, 1.0),
            DistortionSpec::new(DistortionKind::UniformNoise, 0.0),
            DistortionSpec::new(DistortionKind::LowPass, 0.0),
            DistortionSpec::new(DistortionKind::HighPass, 0.0),
            DistortionSpec::new(DistortionKind::PhaseNoise, 0.0),
            DistortionSpec::new(DistortionKind::Rotation, 0.0),
        ];
        for spec in &identity_specs {
            let out = apply_distortion(&ex, spec, &mut stream()).unwrap();
            assert_eq!(out.image, ex.image, "{} not exact", spec.kind.name());
        }
    }

    #[test]
    fn four_quarter_turns_restore_the_image() {
        let ex = example();
        let spec = DistortionSpec::new(DistortionKind::Rotation, 90.0);
        let mut cur = ex.clone();
        for _ in 0..4 {
            cur = apply_distortion(&cur, &spec, &mut stream()).unwrap();
        }
        assert_eq!(cur.image, ex.image);
    }

    #[test]
    fn rotation_and_complement_rotation_compose_to_identity() {
        let ex = example();
        for r in [90.0, 180.0, 270.0] {
            let a = apply_distortion(&ex, &DistortionSpec::new(DistortionKind::Rotation, r), &mut stream())
                .unwrap();
            let b = apply_distortion(
                &a,
                &DistortionSpec::new(DistortionKind::Rotation, 360.0 - r),
                &mut stream(),
            )
            .unwrap();
            assert_eq!(b.image, ex.image, "rotation {r}");
        }
    }

    #[test]
    fn uniform_noise_on_constant_image_bounds_and_variance() {
        let mut ex = example();
        ex.image = Tensor::filled(&[32, 32, 3], 0.5);
        let spec = DistortionSpec::new(DistortionKind::UniformNoise, 0.1);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut n = 0usize;
        for rep in 0..40 {
            let mut s = RngStream::new(7).derive(rep);
            let out = apply_distortion(&ex, &spec, &mut s).unwrap();
            for &v in out.image.data() {
                assert!((0.4..=0.6).contains(&v), "value {v} out of bounds");
                let d = v - 0.5;
                sum += d;
                sumsq += d * d;
                n += 1;
            }
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let expected = 0.1 * 0.1 / 3.0;
        assert!(
            (var - expected).abs() < 0.0003,
            "variance {var}, expected {expected}"
        );
    }

    #[test]
    fn grayscale_is_idempotent_and_weighted() {
        let ex = example();
        let spec = DistortionSpec::new(DistortionKind::Grayscale, 0.0);
        let once = apply_distortion(&ex, &spec, &mut stream()).unwrap();
        let twice = apply_distortion(&once, &spec, &mut stream()).unwrap();
        assert_eq!(once.image, twice.image);

        // Weighted combination on a non-gray pixel.
        let mut colored = ex.clone();
        colored.image.set3(0, 0, 0, 0.8);
        colored.image.set3(0, 0, 1, 0.2);
        colored.image.set3(0, 0, 2, 0.4);
        let g = apply_distortion(&colored, &spec, &mut stream()).unwrap();
        let expected = 0.299 * 0.8 + 0.587 * 0.2 + 0.114 * 0.4;
        assert!((g.image.at3(0, 0, 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn false_colour_is_an_involution_on_generated_images() {
        let ex = example();
        let spec = DistortionSpec::new(DistortionKind::FalseColour, 0.0);
        let once = apply_distortion(&ex, &spec, &mut stream()).unwrap();
        let twice = apply_distortion(&once, &spec, &mut stream()).unwrap();
        assert_eq!(twice.image, ex.image);
        assert_ne!(once.image, ex.image);
    }

    #[test]
    fn phase_noise_zero_and_self_power_equalisation_are_identities() {
        let ex = example();
        let zero_phase = apply_distortion(
            &ex,
            &DistortionSpec::new(DistortionKind::PhaseNoise, 0.0),
            &mut stream(),
        )
        .unwrap();
        assert_eq!(zero_phase.image, ex.image);

        let eq = equalise_power(std::slice::from_ref(&ex)).unwrap();
        let max_err = eq[0]
            .image
            .data()
            .iter()
            .zip(ex.image.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-9, "max error {max_err:e}");
    }

    #[test]
    fn labels_and_ids_are_preserved() {
        let ex = example();
        for kind in [
            DistortionKind::Grayscale,
            DistortionKind::Contrast,
            DistortionKind::LowPass,
            DistortionKind::Silhouette,
            DistortionKind::Edge,
        ] {
            let level = match kind {
                DistortionKind::Contrast => 0.3,
                DistortionKind::LowPass => 2.0,
                _ => 0.0,
            };
            let out =
                apply_distortion(&ex, &DistortionSpec::new(kind, level), &mut stream()).unwrap();
            assert_eq!(out.shape_label, ex.shape_label);
            assert_eq!(out.texture_label, ex.texture_label);
            assert_eq!(out.image_id, ex.image_id);
            assert_eq!(out.condition, kind.name());
            assert!(out.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn cue_conflict_kind_is_rejected() {
        let ex = example();
        assert!(matches!(
            apply_distortion(
                &ex,
                &DistortionSpec::new(DistortionKind::CueConflict, 0.0),
                &mut stream()
            ),
            Err(DataError::UnsupportedKind(_))
        ));
    }

    #[test]
    fn negative_level_is_rejected() {
        let ex = example();
        assert!(matches!(
            apply_distortion(
                &ex,
                &DistortionSpec::new(DistortionKind::LowPass, -1.0),
                &mut stream()
            ),
            Err(DataError::BadLevel { .. })
        ));
    }

    #[test]
    fn silhouette_is_black_shape_on_white() {
        let ex = example();
        let out = apply_distortion(
            &ex,
            &DistortionSpec::new(DistortionKind::Silhouette, 0.0),
            &mut stream(),
        )
        .unwrap();
        let dark = out.image.data().iter().filter(|&&v| v == 0.0).count();
        let light = out.image.data().iter().filter(|&&v| v == 1.0).count();
        assert_eq!(dark + light, out.image.len());
        let coverage = dark as f64 / out.image.len() as f64;
        assert!((0.15..=0.65).contains(&coverage), "coverage {coverage}");
    }

    #[test]
    fn edge_is_thin_outline() {
        let ex = example();
        let sil = apply_distortion(
            &ex,
            &DistortionSpec::new(DistortionKind::Silhouette, 0.0),
            &mut stream(),
        )
        .unwrap();
        let out = apply_distortion(
            &ex,
            &DistortionSpec::new(DistortionKind::Edge, 0.0),
            &mut stream(),
        )
        .unwrap();
        let edge_dark = out.image.data().iter().filter(|&&v| v == 0.0).count();
        let sil_dark = sil.image.data().iter().filter(|&&v| v == 0.0).count();
        assert!(edge_dark > 0);
        assert!(edge_dark < sil_dark, "outline should be sparser than fill");
    }

    #[test]
    fn low_pass_reduces_high_frequency_energy() {
        let ex = example();
        let out = apply_distortion(
            &ex,
            &DistortionSpec::new(DistortionKind::LowPass, 2.0),
            &mut stream(),
        )
        .unwrap();
        let roughness = |img: &Tensor| -> f64 {
            let mut acc = 0.0;
            for y in 0..31 {
                for x in 0..31 {
                    let v = img.at3(y, x, 0);
                    acc += (img.at3(y + 1, x, 0) - v).abs() + (img.at3(y, x + 1, 0) - v).abs();
                }
            }
            acc
        };
        assert!(roughness(&out.image) < 0.5 * roughness(&ex.image));
    }
}
