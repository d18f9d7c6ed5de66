use nalgebra::{DMatrix, DVector};

use super::small::{core_resolvent, is_symmetric, sqrt_core, symmetrize, SYMMETRY_TOL};
use super::{check_dense_bound, ProcessNoise};
use crate::error::{contract, Result};

/// Symmetric `diag + factor · core · factorᵀ`.
///
/// `core` is symmetric but may be indefinite: inverting a positive definite
/// matrix through the Woodbury identity yields a negative definite core.
#[derive(Debug, Clone, PartialEq)]
pub struct DplrSym {
    diag: DVector<f64>,
    factor: DMatrix<f64>,
    core: DMatrix<f64>,
}

impl DplrSym {
    pub fn new(diag: DVector<f64>, factor: DMatrix<f64>, core: DMatrix<f64>) -> Result<Self> {
        if factor.nrows() != diag.len() {
            return Err(contract(format!(
                "factor has {} rows, diagonal has {}",
                factor.nrows(),
                diag.len()
            )));
        }
        if core.nrows() != factor.ncols() || core.ncols() != factor.ncols() {
            return Err(contract(format!(
                "core is {}×{}, factor has {} columns",
                core.nrows(),
                core.ncols(),
                factor.ncols()
            )));
        }
        if !is_symmetric(&core, SYMMETRY_TOL) {
            return Err(contract("core is not symmetric"));
        }
        let mut core = core;
        symmetrize(&mut core);
        Ok(Self { diag, factor, core })
    }

    pub fn from_diag(diag: DVector<f64>) -> Self {
        let d = diag.len();
        Self { diag, factor: DMatrix::zeros(d, 0), core: DMatrix::zeros(0, 0) }
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        Self::from_diag(DVector::from_element(dim, scale))
    }

    /// `factor · diag(values) · factorᵀ` on top of `diag`.
    pub fn from_eigen_parts(diag: DVector<f64>, factor: DMatrix<f64>, values: &[f64]) -> Result<Self> {
        let core = DMatrix::from_diagonal(&DVector::from_column_slice(values));
        Self::new(diag, factor, core)
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.diag
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn core(&self) -> &DMatrix<f64> {
        &self.core
    }

    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        (self.diag, self.factor, self.core)
    }

    /// Number of `f64` values held, `D + D·k + k²`.
    pub fn storage_len(&self) -> usize {
        self.dim() + self.factor.len() + self.core.len()
    }

    /// `A·x` in `O(Dk)`.
    ///
    /// # Panics
    /// If `x.len()` differs from the dimension.
    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.dim(), "matvec: vector length does not match dimension");
        let mut out = self.diag.component_mul(x);
        if self.rank() > 0 {
            let proj = self.factor.tr_mul(x);
            let mixed = &self.core * proj;
            out.gemv(1.0, &self.factor, &mixed, 1.0);
        }
        out
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.matvec(x))
    }

    pub fn add_diag(&self, extra: &DVector<f64>) -> Result<Self> {
        if extra.len() != self.dim() {
            return Err(contract("add_diag: dimension mismatch"));
        }
        Ok(Self { diag: &self.diag + extra, factor: self.factor.clone(), core: self.core.clone() })
    }

    /// Exact sum with block-diagonal core; rank becomes `k_a + k_b`.
    pub fn add_lowrank_exact(&self, other: &DplrSym) -> Result<Self> {
        if other.dim() != self.dim() {
            return Err(contract("add_lowrank_exact: dimension mismatch"));
        }
        let (ka, kb) = (self.rank(), other.rank());
        let d = self.dim();
        let mut factor = DMatrix::zeros(d, ka + kb);
        factor.columns_mut(0, ka).copy_from(&self.factor);
        factor.columns_mut(ka, kb).copy_from(&other.factor);
        let mut core = DMatrix::zeros(ka + kb, ka + kb);
        core.view_mut((0, 0), (ka, ka)).copy_from(&self.core);
        core.view_mut((ka, ka), (kb, kb)).copy_from(&other.core);
        Ok(Self { diag: &self.diag + &other.diag, factor, core })
    }

    /// Woodbury inverse:
    /// `D⁻¹ + (D⁻¹U) · (−(Σ⁻¹ + UᵀD⁻¹U)⁻¹) · (D⁻¹U)ᵀ`.
    ///
    /// The inner inverse is evaluated as `Σ(I + UᵀD⁻¹U Σ)⁻¹`, which needs no
    /// inverse of `Σ` itself. The rank is preserved.
    pub fn invert(&self) -> Result<Self> {
        if let Some(i) = self.diag.iter().position(|&v| v == 0.0) {
            return Err(contract(format!("invert: diagonal entry {i} is zero")));
        }
        let inv_diag = self.diag.map(|v| 1.0 / v);
        let mut factor = self.factor.clone();
        scale_rows(&mut factor, &inv_diag);
        if self.rank() == 0 {
            return Ok(Self { diag: inv_diag, factor, core: self.core.clone() });
        }
        let m = super::at_b(&self.factor, &factor);
        let core = -core_resolvent(&self.core, &m, "woodbury inverse")?;
        Ok(Self { diag: inv_diag, factor, core })
    }

    /// Information-form predict step `(A⁻¹ + diag(q))⁻¹`.
    ///
    /// `D⁻ = (Q + D⁻¹)⁻¹`, `U⁻ = (Q + D⁻¹)⁻¹D⁻¹U` and
    /// `Σ⁻ = (Σ⁻¹ + UᵀD⁻¹U − UᵀD⁻¹(Q + D⁻¹)⁻¹D⁻¹U)⁻¹`. The two middle terms
    /// collapse to `Uᵀ diag(q / (1 + q d)) U`, so zero noise reproduces the
    /// input bit for bit.
    pub fn predict_precision(&self, noise: &ProcessNoise) -> Result<Self> {
        if noise.dim() != self.dim() {
            return Err(contract("predict_precision: process noise dimension mismatch"));
        }
        let q = noise.as_vector();
        if let Some(i) = self.diag.iter().position(|&v| v <= 0.0) {
            return Err(contract(format!("predict_precision: diagonal entry {i} is not positive")));
        }
        let shrink = self.diag.zip_map(q, |d, q| 1.0 / (1.0 + q * d));
        let diag = self.diag.component_mul(&shrink);
        let mut factor = self.factor.clone();
        scale_rows(&mut factor, &shrink);
        if self.rank() == 0 {
            return Ok(Self { diag, factor, core: self.core.clone() });
        }
        let weights = q.component_mul(&shrink);
        let mut weighted = self.factor.clone();
        scale_rows(&mut weighted, &weights);
        let m = super::at_b(&self.factor, &weighted);
        let core = core_resolvent(&self.core, &m, "predict precision")?;
        Ok(Self { diag, factor, core })
    }

    /// `U · Σ^{1/2}`, a D×k block whose outer product is the low-rank term.
    /// Requires a PSD core.
    pub fn lowrank_sqrt(&self) -> Result<DMatrix<f64>> {
        if self.rank() == 0 {
            return Ok(DMatrix::zeros(self.dim(), 0));
        }
        Ok(&self.factor * sqrt_core(&self.core)?)
    }

    /// Dense realization; only for `D ≤` [`super::DENSE_BOUND`].
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        check_dense_bound(self.dim())?;
        let mut out = &self.factor * &self.core * self.factor.transpose();
        for i in 0..self.dim() {
            out[(i, i)] += self.diag[i];
        }
        Ok(out)
    }
}

/// Multiplies row `i` of `m` by `s[i]`.
pub(crate) fn scale_rows(m: &mut DMatrix<f64>, s: &DVector<f64>) {
    for mut col in m.column_iter_mut() {
        col.component_mul_assign(s);
    }
}
