use serde::{Deserialize, Serialize};

use crate::numeric::{dft2, idft2, RngStream, Tensor};

use super::snap_unit;

/// The eight stationary texture families. All are grayscale (equal channels)
/// with mean intensity near 0.5, so class identity lives in spatial structure
/// rather than color or brightness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextureKind {
    StripesFine,
    StripesCoarse,
    Checker,
    Dots,
    NoisePink,
    NoiseBlue,
    Waves,
    Grid,
}

impl TextureKind {
    pub const ALL: [TextureKind; 8] = [
        TextureKind::StripesFine,
        TextureKind::StripesCoarse,
        TextureKind::Checker,
        TextureKind::Dots,
        TextureKind::NoisePink,
        TextureKind::NoiseBlue,
        TextureKind::Waves,
        TextureKind::Grid,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TextureKind::StripesFine => "stripes-fine",
            TextureKind::StripesCoarse => "stripes-coarse",
            TextureKind::Checker => "checker",
            TextureKind::Dots => "dots",
            TextureKind::NoisePink => "noise-pink",
            TextureKind::NoiseBlue => "noise-blue",
            TextureKind::Waves => "waves",
            TextureKind::Grid => "grid",
        }
    }
}

/// A texture class: id, family, and its period/spectral parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureClass {
    pub id: usize,
    pub kind: TextureKind,
    /// Base period in pixels for periodic families.
    pub period: usize,
    /// Contrast amplitude around the 0.5 mean.
    pub amplitude: f64,
}

impl TextureClass {
    pub fn new(id: usize, kind: TextureKind) -> Self {
        let period = match kind {
            TextureKind::StripesFine => 2,
            TextureKind::StripesCoarse => 6,
            TextureKind::Checker => 4,
            TextureKind::Dots => 6,
            TextureKind::Grid => 5,
            _ => 0,
        };
        Self {
            id,
            kind,
            period,
            amplitude: 0.34,
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }
}

fn gray(size: usize, value: impl Fn(usize, usize) -> f64) -> Tensor {
    let mut t = Tensor::zeros(&[size, size, 3]);
    for y in 0..size {
        for x in 0..size {
            let v = snap_unit(value(y, x));
            for c in 0..3 {
                t.set3(y, x, c, v);
            }
        }
    }
    t
}

/// Spectrally shaped noise: white noise reweighted by f^exponent, then
/// standardized to mean 0.5.
fn shaped_noise(size: usize, exponent: f64, stream: &mut RngStream) -> Tensor {
    let field = stream.sample_gaussian(&[size, size]);
    let spec = dft2(&field).expect("2-d field");
    let mut shaped = spec.clone();
    let n = size as f64;
    for u in 0..size {
        for v in 0..size {
            // Radial frequency with wrap-around (cycles per image edge).
            let fu = u.min(size - u) as f64 / n;
            let fv = v.min(size - v) as f64 / n;
            let f = (fu * fu + fv * fv).sqrt();
            let gain = if u == 0 && v == 0 {
                0.0
            } else {
                (f.max(1.0 / n)).powf(exponent)
            };
            shaped.set(u, v, spec.at(u, v) * gain);
        }
    }
    let raw = idft2(&shaped).expect("symmetric by construction");
    let mean = raw.data().iter().sum::<f64>() / raw.len() as f64;
    let var = raw
        .data()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / raw.len() as f64;
    let scale = if var > 0.0 { 0.16 / var.sqrt() } else { 0.0 };
    // Clamp inside (0, 0.94] so texture never collides with the white
    // background that mask recovery keys on.
    gray(size, |y, x| {
        (0.5 + (raw.at2(y, x) - mean) * scale).clamp(0.06, 0.94)
    })
}

/// Stationary texture in [0, 1] with a class-distinct mean power spectrum.
///
/// Every family randomizes its phase (stripe bands, cell offsets, dot
/// positions, noise fields), so single instances carry placement randomness a
/// pixel-regressor cannot predict, while class statistics stay fixed.
pub fn make_texture(class: &TextureClass, stream: &mut RngStream, size: usize) -> Tensor {
    let amp = class.amplitude;
    match class.kind {
        TextureKind::StripesFine | TextureKind::StripesCoarse => {
            let horizontal = class.kind == TextureKind::StripesFine;
            let p = class.period.max(2);
            let phase = stream.next_below(p);
            let bands = size.div_ceil(p) * p + p;
            let jitter: Vec<f64> = (0..bands).map(|_| stream.next_range(-0.10, 0.10)).collect();
            gray(size, |y, x| {
                let along = if horizontal { y } else { x };
                let pos = along + phase;
                let band = pos / (p / 2).max(1);
                let hi = (pos / (p / 2).max(1)) % 2 == 0;
                let base = if hi { 0.5 + amp } else { 0.5 - amp };
                base + jitter[band % bands]
            })
        }
        TextureKind::Checker => {
            let p = class.period.max(2);
            let (ox, oy) = (stream.next_below(p), stream.next_below(p));
            let hi = 0.5 + amp + stream.next_range(-0.08, 0.08);
            let lo = 0.5 - amp + stream.next_range(-0.08, 0.08);
            gray(size, |y, x| {
                if ((x + ox) / p + (y + oy) / p) % 2 == 0 {
                    hi
                } else {
                    lo
                }
            })
        }
        TextureKind::Dots => {
            let g = class.period.max(3);
            let cells = size.div_ceil(g);
            let radius = 1.8f64;
            let mut centers = Vec::with_capacity(cells * cells);
            for cy in 0..cells {
                for cx in 0..cells {
                    let jx = stream.next_range(-1.5, 1.5);
                    let jy = stream.next_range(-1.5, 1.5);
                    centers.push((
                        cy as f64 * g as f64 + g as f64 / 2.0 + jy,
                        cx as f64 * g as f64 + g as f64 / 2.0 + jx,
                    ));
                }
            }
            let field = 0.68;
            let ink = 0.12;
            gray(size, |y, x| {
                let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
                let n = size as f64;
                for &(cy, cx) in &centers {
                    // Toroidal distance keeps the pattern stationary.
                    let dy = (py - cy).abs().min(n - (py - cy).abs());
                    let dx = (px - cx).abs().min(n - (px - cx).abs());
                    if dy * dy + dx * dx <= radius * radius {
                        return ink;
                    }
                }
                field
            })
        }
        TextureKind::NoisePink => shaped_noise(size, -1.2, stream),
        TextureKind::NoiseBlue => shaped_noise(size, 0.9, stream),
        TextureKind::Waves => {
            let phase_a = stream.next_range(0.0, std::f64::consts::TAU);
            let phase_b = stream.next_range(0.0, std::f64::consts::TAU);
            let (ca, sa) = (20f64.to_radians().cos(), 20f64.to_radians().sin());
            let (cb, sb) = (110f64.to_radians().cos(), 110f64.to_radians().sin());
            gray(size, |y, x| {
                let (py, px) = (y as f64, x as f64);
                let wa = (std::f64::consts::TAU * (px * ca + py * sa) / 5.3 + phase_a).sin();
                let wb = (std::f64::consts::TAU * (px * cb + py * sb) / 7.1 + phase_b).sin();
                0.5 + 0.22 * wa + 0.22 * wb
            })
        }
        TextureKind::Grid => {
            let g = class.period.max(3);
            let (ox, oy) = (stream.next_below(g), stream.next_below(g));
            let lines = size.div_ceil(g) + 2;
            let jx: Vec<f64> = (0..lines).map(|_| stream.next_range(-0.08, 0.08)).collect();
            let jy: Vec<f64> = (0..lines).map(|_| stream.next_range(-0.08, 0.08)).collect();
            let base = 0.78;
            let ink = 0.14;
            gray(size, |y, x| {
                let on_v = (x + ox) % g == 0;
                let on_h = (y + oy) % g == 0;
                if on_v {
                    ink + jx[(x + ox) / g % lines]
                } else if on_h {
                    ink + jy[(y + oy) / g % lines]
                } else {
                    base
                }
            })
        }
    }
}
