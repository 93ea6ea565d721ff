use num_complex::Complex64;

use super::{NumericError, Tensor};

/// 2-D complex spectrum in row-major [height, width] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> Complex64 {
        self.data[u * self.width + v]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: Complex64) {
        self.data[u * self.width + v] = value;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Maximum deviation from conjugate symmetry F[u,v] = conj(F[-u,-v]).
    pub fn symmetry_deviation(&self) -> f64 {
        let (h, w) = (self.height, self.width);
        let mut max_dev: f64 = 0.0;
        for u in 0..h {
            for v in 0..w {
                let mirror = self.at((h - u) % h, (w - v) % w).conj();
                max_dev = max_dev.max((self.at(u, v) - mirror).norm());
            }
        }
        max_dev
    }
}

/// Roots of unity e^{-2 pi i m / n} for m in 0..n.
fn twiddles(n: usize, sign: f64) -> Vec<Complex64> {
    (0..n)
        .map(|m| {
            let angle = sign * 2.0 * std::f64::consts::PI * m as f64 / n as f64;
            Complex64::new(angle.cos(), angle.sin())
        })
        .collect()
}

/// Direct 1-D transform along rows of a [rows, n] complex buffer.
fn transform_rows(data: &mut Vec<Complex64>, rows: usize, n: usize, sign: f64) {
    let w = twiddles(n, sign);
    let mut out = vec![Complex64::new(0.0, 0.0); rows * n];
    for r in 0..rows {
        let row = &data[r * n..(r + 1) * n];
        for k in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, value) in row.iter().enumerate() {
                acc += value * w[(j * k) % n];
            }
            out[r * n + k] = acc;
        }
    }
    *data = out;
}

fn transpose(data: &mut Vec<Complex64>, rows: usize, cols: usize) {
    let mut out = vec![Complex64::new(0.0, 0.0); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    *data = out;
}

/// Forward 2-D DFT of a real [H, W] channel. Direct O(n^2) per axis.
pub fn dft2(channel: &Tensor) -> Result<Spectrum, NumericError> {
    if channel.shape().len() != 2 {
        return Err(NumericError::NotTwoDimensional {
            shape: channel.shape().to_vec(),
        });
    }
    let (h, w) = (channel.shape()[0], channel.shape()[1]);
    let mut data: Vec<Complex64> = channel
        .data()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    transform_rows(&mut data, h, w, -1.0);
    transpose(&mut data, h, w);
    transform_rows(&mut data, w, h, -1.0);
    transpose(&mut data, w, h);
    Ok(Spectrum {
        height: h,
        width: w,
        data,
    })
}

/// Tolerance for the conjugate-symmetry check, relative to peak magnitude.
const SYMMETRY_TOL: f64 = 1e-6;

/// Inverse 2-D DFT demanding a real result; errors if the spectrum is not
/// conjugate-symmetric.
pub fn idft2(spectrum: &Spectrum) -> Result<Tensor, NumericError> {
    let peak = spectrum
        .data
        .iter()
        .map(|c| c.norm())
        .fold(0.0f64, f64::max);
    let dev = spectrum.symmetry_deviation();
    if dev > SYMMETRY_TOL * peak.max(1.0) {
        return Err(NumericError::NonSymmetricSpectrum { max_dev: dev });
    }
    let (h, w) = (spectrum.height, spectrum.width);
    let mut data = spectrum.data.clone();
    transform_rows(&mut data, h, w, 1.0);
    transpose(&mut data, h, w);
    transform_rows(&mut data, w, h, 1.0);
    transpose(&mut data, w, h);
    let scale = 1.0 / (h * w) as f64;
    let out: Vec<f64> = data.iter().map(|c| c.re * scale).collect();
    Tensor::new(vec![h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::RngStream;

    #[test]
    fn constant_image_has_single_dc_entry() {
        let c = 0.37;
        let img = Tensor::filled(&[8, 8], c);
        let spec = dft2(&img).unwrap();
        assert!((spec.at(0, 0).re - c * 64.0).abs() < 1e-9);
        assert!(spec.at(0, 0).im.abs() < 1e-9);
        for u in 0..8 {
            for v in 0..8 {
                if (u, v) != (0, 0) {
                    assert!(spec.at(u, v).norm() < 1e-9, "({u},{v}) not ~0");
                }
            }
        }
    }

    #[test]
    fn round_trip_is_near_exact() {
        let mut stream = RngStream::new(31).derive(0);
        let img = stream.sample_gaussian(&[8, 8]);
        let back = idft2(&dft2(&img).unwrap()).unwrap();
        let max_err = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-9, "max error {max_err:e}");
    }

    #[test]
    fn parseval_identity_holds() {
        let mut stream = RngStream::new(32).derive(0);
        let img = stream.sample_gaussian(&[8, 8]);
        let spec = dft2(&img).unwrap();
        let spatial = img.sq_norm();
        let spectral = spec.energy() / 64.0;
        assert!(
            (spatial - spectral).abs() / spatial < 1e-9,
            "{spatial} vs {spectral}"
        );
    }

    #[test]
    fn round_trip_holds_on_sizes_up_to_64() {
        for &n in &[1usize, 2, 3, 5, 16, 33, 64] {
            let mut stream = RngStream::new(100 + n as u64).derive(0);
            let img = stream.sample_gaussian(&[n, n.min(17)]);
            let back = idft2(&dft2(&img).unwrap()).unwrap();
            let max_err = img
                .data()
                .iter()
                .zip(back.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_err < 1e-9, "size {n}: {max_err:e}");
        }
    }

    #[test]
    fn asymmetric_spectrum_is_rejected() {
        let img = Tensor::filled(&[4, 4], 0.5);
        let mut spec = dft2(&img).unwrap();
        spec.set(1, 2, Complex64::new(3.0, 4.0));
        assert!(matches!(
            idft2(&spec),
            Err(NumericError::NonSymmetricSpectrum { .. })
        ));
    }

    #[test]
    fn non_2d_input_is_rejected() {
        let t = Tensor::zeros(&[4, 4, 3]);
        assert!(matches!(
            dft2(&t),
            Err(NumericError::NotTwoDimensional { .. })
        ));
    }
}
