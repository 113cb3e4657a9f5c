use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major array of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::config(format!("tensor shape {shape:?} has a zero extent")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InputShape { expected, got: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("tensor element {i} is not finite ({})", data[i])));
        }
        Ok(Self { shape, data })
    }

    /// One-dimensional tensor.
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

impl AsRef<[f64]> for Tensor {
    fn as_ref(&self) -> &[f64] {
        &self.data
    }
}

/// Valid value interval `[x_min, x_max]` shared by every input coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataRange {
    pub x_min: f64,
    pub x_max: f64,
}

impl DataRange {
    pub fn new(x_min: f64, x_max: f64) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min >= x_max {
            return Err(Error::config(format!("invalid data range [{x_min}, {x_max}]")));
        }
        Ok(Self { x_min, x_max })
    }

    /// The `[0, 1]` range of byte images scaled by 1/255.
    pub fn unit() -> Self {
        Self { x_min: 0.0, x_max: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.x_min + self.x_max)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.x_min && v <= self.x_max
    }

    pub fn shifted(&self, s: f64) -> Self {
        Self { x_min: self.x_min + s, x_max: self.x_max + s }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch_and_nan() {
        assert!(matches!(
            Tensor::new(vec![2, 2], vec![1.0; 3]),
            Err(Error::InputShape { expected: 4, got: 3 })
        ));
        assert!(Tensor::vector(vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::vector(vec![f64::INFINITY]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn range_validation() {
        assert!(DataRange::new(1.0, 1.0).is_err());
        assert!(DataRange::new(2.0, 1.0).is_err());
        let r = DataRange::new(-2.12, 2.64).unwrap();
        assert!((r.midpoint() - 0.26).abs() < 1e-15);
        assert!(r.contains(-2.12) && r.contains(2.64) && !r.contains(2.65));
    }
}
