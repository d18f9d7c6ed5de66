//! Brute-force dense references for the filter, smoother and curvature code.
//!
//! These exist to check the structured routines at small `D` and are never
//! called by them. Every entry point refuses `D >` [`crate::dplr::DENSE_BOUND`].

use nalgebra::{DMatrix, DVector};

use crate::dplr::{check_dense_bound, ProcessNoise};
#[cfg(test)]
use crate::dplr::DENSE_BOUND;
use crate::error::{contract, Error, Result};
use crate::net::Penalty;

/// Dense `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl DenseGaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_dense_bound(mean.len())?;
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(contract("covariance shape does not match mean"));
        }
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        if (&cov - cov.transpose()).amax() > 1e-10 * scale {
            return Err(contract("covariance is not symmetric"));
        }
        if cov.clone().cholesky().is_none() {
            return Err(contract("covariance is not positive definite"));
        }
        Ok(Self { mean, cov })
    }

    pub fn from_precision(mean: DVector<f64>, precision: &DMatrix<f64>) -> Result<Self> {
        let cov = spd_inverse(precision, "dense precision inverse")?;
        Self::new(mean, cov)
    }

    pub fn precision(&self) -> Result<DMatrix<f64>> {
        spd_inverse(&self.cov, "dense covariance inverse")
    }
}

/// Inverse of a symmetric positive definite matrix via Cholesky, symmetrized.
pub fn spd_inverse(a: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    check_dense_bound(a.nrows())?;
    let chol = a.clone().cholesky().ok_or(Error::Numerical { context, condition: f64::INFINITY })?;
    let inv = chol.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// General dense inverse via LU.
pub fn dense_inverse(a: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    check_dense_bound(a.nrows())?;
    a.clone().try_inverse().ok_or(Error::Numerical { context, condition: f64::INFINITY })
}

/// `cov + diag(q)`, mean unchanged.
pub fn dense_predict(g: &DenseGaussian, q: &ProcessNoise) -> Result<DenseGaussian> {
    if q.dim() != g.mean.len() {
        return Err(contract("process noise dimension mismatch"));
    }
    let mut cov = g.cov.clone();
    for i in 0..cov.nrows() {
        cov[(i, i)] += q.as_vector()[i];
    }
    Ok(DenseGaussian { mean: g.mean.clone(), cov })
}

/// Laplace update: mean = mode, cov = (H + cov_prior⁻¹)⁻¹.
pub fn dense_laplace_update(prior: &DenseGaussian, hessian: &DMatrix<f64>, mode: &DVector<f64>) -> Result<DenseGaussian> {
    let precision = prior.precision()? + hessian;
    DenseGaussian::from_precision(mode.clone(), &precision)
}

/// One Rauch–Tung–Striebel step with `G = C_t (C⁻_{t+1})⁻¹`:
/// `m^s = m + G(m^s_{+} − m⁻_{+})`, `C^s = C + G(C^s_{+} − C⁻_{+})Gᵀ`.
pub fn dense_smoother_step(
    filt: &DenseGaussian,
    next_smoothed: &DenseGaussian,
    next_pred: &DenseGaussian,
) -> Result<DenseGaussian> {
    let pred_inv = spd_inverse(&next_pred.cov, "dense predicted covariance inverse")?;
    let gain = &filt.cov * pred_inv;
    let mean = &filt.mean + &gain * (&next_smoothed.mean - &next_pred.mean);
    let mut cov = &filt.cov + &gain * (&next_smoothed.cov - &next_pred.cov) * gain.transpose();
    cov = (&cov + cov.transpose()) * 0.5;
    Ok(DenseGaussian { mean, cov })
}

/// Dense smoothing gain `(I + Q P)⁻¹`.
pub fn dense_gain(precision: &DMatrix<f64>, q: &ProcessNoise) -> Result<DMatrix<f64>> {
    let d = precision.nrows();
    let mut a = DMatrix::from_diagonal(q.as_vector()) * precision;
    for i in 0..d {
        a[(i, i)] += 1.0;
    }
    dense_inverse(&a, "dense gain")
}

/// Full backward pass over dense filtered beliefs.
pub fn dense_rts(filtered: &[DenseGaussian], q: &ProcessNoise) -> Result<Vec<DenseGaussian>> {
    let Some(last) = filtered.last() else {
        return Ok(Vec::new());
    };
    let mut out = vec![last.clone(); filtered.len()];
    for t in (0..filtered.len() - 1).rev() {
        let pred = dense_predict(&filtered[t], q)?;
        out[t] = dense_smoother_step(&filtered[t], &out[t + 1], &pred)?;
    }
    Ok(out)
}

/// `Σ_b J_b Ĥ_b J_bᵀ`.
pub fn dense_ggn(jacobians: &[DMatrix<f64>], out_hessians: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    if jacobians.len() != out_hessians.len() {
        return Err(contract("jacobian and output-hessian lists differ in length"));
    }
    let Some(first) = jacobians.first() else {
        return Ok(DMatrix::zeros(0, 0));
    };
    let d = first.nrows();
    check_dense_bound(d)?;
    let mut out = DMatrix::zeros(d, d);
    for (j, h) in jacobians.iter().zip(out_hessians) {
        if j.nrows() != d || h.nrows() != j.ncols() || h.ncols() != j.ncols() {
            return Err(contract("jacobian / output-hessian shape mismatch"));
        }
        out += j * h * j.transpose();
    }
    Ok(out)
}

/// `cbrt(ε)·(1 + ‖θ‖∞)`.
pub fn default_fd_step(theta: &DVector<f64>) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + theta.amax())
}

/// Central-difference Hessian of a scalar function, symmetrized.
pub fn dense_hessian_fd(loss: impl Fn(&DVector<f64>) -> f64, theta: &DVector<f64>, h: Option<f64>) -> Result<DMatrix<f64>> {
    let d = theta.len();
    check_dense_bound(d)?;
    let h = h.unwrap_or_else(|| default_fd_step(theta));
    if !(h > 0.0) {
        return Err(contract("finite-difference step must be positive"));
    }
    let f0 = loss(theta);
    let mut out = DMatrix::zeros(d, d);
    let shifted = |i: usize, si: f64, j: usize, sj: f64| {
        let mut x = theta.clone();
        x[i] += si;
        x[j] += sj;
        loss(&x)
    };
    for i in 0..d {
        out[(i, i)] = (shifted(i, h, i, 0.0) - 2.0 * f0 + shifted(i, -h, i, 0.0)) / (h * h);
        for j in 0..i {
            let v = (shifted(i, h, j, h) - shifted(i, h, j, -h) - shifted(i, -h, j, h) + shifted(i, -h, j, -h))
                / (4.0 * h * h);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Central-difference gradient.
pub fn fd_gradient(loss: impl Fn(&DVector<f64>) -> f64, theta: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(theta.len(), |i, _| {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[i] += h;
        minus[i] -= h;
        (loss(&plus) - loss(&minus)) / (2.0 * h)
    })
}

/// `(λ/2)(θ − m)ᵀ P (θ − m)` with a dense `P`.
#[derive(Debug, Clone)]
pub struct DensePenalty {
    pub anchor: DVector<f64>,
    pub precision: DMatrix<f64>,
    pub strength: f64,
}

impl Penalty for DensePenalty {
    fn value_and_grad(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let diff = theta - &self.anchor;
        let pd = &self.precision * &diff;
        Ok((0.5 * self.strength * diff.dot(&pd), pd * self.strength))
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigen().eigenvalues.min()
}

/// `‖a − b‖_F / ‖b‖_F`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
