use serde::{Deserialize, Serialize};

use super::NumericError;

/// Dense row-major tensor of 64-bit floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that the data length matches the shape.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NumericError> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(NumericError::LengthMismatch {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Reinterprets the tensor with a new shape of identical element count.
    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self, NumericError> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(NumericError::LengthMismatch {
                shape,
                len: self.data.len(),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// Index into an [H, W] tensor.
    #[inline]
    pub fn at2(&self, y: usize, x: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[y * self.shape[1] + x]
    }

    #[inline]
    pub fn set2(&mut self, y: usize, x: usize, v: f64) {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[y * self.shape[1] + x] = v;
    }

    /// Index into an [H, W, C] tensor.
    #[inline]
    pub fn at3(&self, y: usize, x: usize, c: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 3);
        let (w, ch) = (self.shape[1], self.shape[2]);
        self.data[(y * w + x) * ch + c]
    }

    #[inline]
    pub fn set3(&mut self, y: usize, x: usize, c: usize, v: f64) {
        debug_assert_eq!(self.shape.len(), 3);
        let (w, ch) = (self.shape[1], self.shape[2]);
        self.data[(y * w + x) * ch + c] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sum of squared entries.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Mean of squared entries (0 for an empty tensor).
    pub fn mean_sq(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sq_norm() / self.data.len() as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_validates_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::new(vec![2, 3], vec![0.0; 5]),
            Err(NumericError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor::new(vec![2, 3], (0..6).map(|v| v as f64).collect()).unwrap();
        assert_eq!(t.at2(0, 0), 0.0);
        assert_eq!(t.at2(0, 2), 2.0);
        assert_eq!(t.at2(1, 0), 3.0);

        let img = Tensor::new(vec![2, 2, 3], (0..12).map(|v| v as f64).collect()).unwrap();
        assert_eq!(img.at3(0, 1, 2), 5.0);
        assert_eq!(img.at3(1, 0, 0), 6.0);
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let r = t.clone().reshaped(vec![2, 2]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(Tensor::from_vec(vec![1.0]).reshaped(vec![2]).is_err());
    }
}
