use nalgebra::{DMatrix, DVector};

use super::check_dense_bound;
use crate::error::{contract, Result};

/// Nonsymmetric `diag + left · core · rightᵀ`, used for the smoothing gain.
#[derive(Debug, Clone, PartialEq)]
pub struct DplrGain {
    diag: DVector<f64>,
    left: DMatrix<f64>,
    core: DMatrix<f64>,
    right: DMatrix<f64>,
}

impl DplrGain {
    pub fn new(
        diag: DVector<f64>,
        left: DMatrix<f64>,
        core: DMatrix<f64>,
        right: DMatrix<f64>,
    ) -> Result<Self> {
        let d = diag.len();
        let k = left.ncols();
        if left.nrows() != d || right.nrows() != d || right.ncols() != k {
            return Err(contract("gain factors do not match the diagonal"));
        }
        if core.nrows() != k || core.ncols() != k {
            return Err(contract("gain core does not match factor rank"));
        }
        Ok(Self { diag, left, core, right })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            diag: DVector::from_element(dim, 1.0),
            left: DMatrix::zeros(dim, 0),
            core: DMatrix::zeros(0, 0),
            right: DMatrix::zeros(dim, 0),
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn rank(&self) -> usize {
        self.left.ncols()
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.diag
    }

    pub fn left(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn core(&self) -> &DMatrix<f64> {
        &self.core
    }

    pub fn right(&self) -> &DMatrix<f64> {
        &self.right
    }

    /// True when the gain is exactly `I`: unit diagonal and a vanishing low-rank part.
    pub fn is_identity(&self) -> bool {
        self.diag.iter().all(|&v| v == 1.0)
            && (self.rank() == 0
                || self.core.iter().all(|&v| v == 0.0)
                || self.left.iter().all(|&v| v == 0.0))
    }

    /// `G·x` in `O(Dk)`.
    ///
    /// # Panics
    /// If `x.len()` differs from the dimension.
    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.dim(), "matvec: vector length does not match dimension");
        let mut out = self.diag.component_mul(x);
        if self.rank() > 0 {
            let proj = self.right.tr_mul(x);
            let mixed = &self.core * proj;
            out.gemv(1.0, &self.left, &mixed, 1.0);
        }
        out
    }

    /// `G·X` for a tall block `X` (D×m), in `O(Dkm)`.
    pub fn matmat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.dim(), "matmat: row count does not match dimension");
        let mut out = x.clone();
        super::sym::scale_rows(&mut out, &self.diag);
        if self.rank() > 0 && x.ncols() > 0 {
            let proj = super::at_b(&self.right, x);
            let mixed = &self.core * proj;
            out.gemm(1.0, &self.left, &mixed, 1.0);
        }
        out
    }

    /// `(I − G)·X`, computed as `X − G·X`.
    pub fn complement_matmat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x - self.matmat(x)
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        check_dense_bound(self.dim())?;
        let mut out = &self.left * &self.core * self.right.transpose();
        for i in 0..self.dim() {
            out[(i, i)] += self.diag[i];
        }
        Ok(out)
    }
}
