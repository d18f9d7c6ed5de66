use nalgebra::DVector;

use crate::error::{contract, Result};

/// Diagonal of the process noise covariance `Q`; all entries nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessNoise {
    q: DVector<f64>,
}

impl ProcessNoise {
    pub fn new(q: DVector<f64>) -> Result<Self> {
        if let Some(i) = q.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(contract(format!("process noise entry {i} is {} (must be finite and >= 0)", q[i])));
        }
        Ok(Self { q })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { q: DVector::zeros(dim) }
    }

    pub fn uniform(dim: usize, value: f64) -> Result<Self> {
        Self::new(DVector::from_element(dim, value))
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn is_zero(&self) -> bool {
        self.q.iter().all(|&v| v == 0.0)
    }
}
