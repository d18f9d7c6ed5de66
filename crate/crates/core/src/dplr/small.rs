//! Kernels on the small k×k inner matrices.

use nalgebra::DMatrix;

use crate::error::{contract, Error, Result};

/// Relative tolerance for treating an inner matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= rel_tol * scale))
}

/// Square root `R` with `R·Rᵀ = S` for a symmetric PSD `S`.
///
/// Uses the eigendecomposition `S = V Λ Vᵀ` and returns the symmetric root
/// `V Λ^{1/2} Vᵀ`. Eigenvalues in `[-ε, 0)` with `ε = 1e-10·‖S‖₂` are
/// clamped to zero; anything more negative is rejected.
pub fn sqrt_core(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if s.nrows() != s.ncols() {
        return Err(contract(format!("sqrt_core: {}×{} is not square", s.nrows(), s.ncols())));
    }
    let k = s.nrows();
    if k == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if !is_symmetric(s, SYMMETRY_TOL) {
        return Err(contract("sqrt_core: input is not symmetric"));
    }
    let mut sym = s.clone();
    symmetrize(&mut sym);
    let eig = sym.symmetric_eigen();
    let norm = eig.eigenvalues.amax();
    let eps = 1e-10 * norm;
    let mut root_vals = eig.eigenvalues.clone();
    for v in root_vals.iter_mut() {
        if *v < -eps {
            return Err(contract(format!(
                "sqrt_core: eigenvalue {v:.3e} below -{eps:.3e}, input is not PSD"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= root_vals[j];
    }
    let mut r = scaled * v.transpose();
    symmetrize(&mut r);
    Ok(r)
}

/// Computes `Σ (I + M Σ)⁻¹` for symmetric `Σ` and `M`, i.e. `(Σ⁻¹ + M)⁻¹`
/// without ever inverting `Σ`, so singular or indefinite cores are fine.
///
/// The system `(I + Σ M) Xᵀ = Σ` is solved by LU. If the factorization is
/// singular or its pivot ratio exceeds `1e14`, `1e-10·|tr|/k` is added to the
/// diagonal once and the solve retried.
pub(crate) fn core_resolvent(
    core: &DMatrix<f64>,
    m: &DMatrix<f64>,
    context: &'static str,
) -> Result<DMatrix<f64>> {
    let k = core.nrows();
    if k == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let mut a = core * m;
    for i in 0..k {
        a[(i, i)] += 1.0;
    }
    let x_t = match solve_checked(&a, core) {
        Ok(x) => x,
        Err(_) => {
            let jitter = 1e-10 * a.trace().abs() / k as f64;
            for i in 0..k {
                a[(i, i)] += jitter;
            }
            solve_checked(&a, core).map_err(|condition| Error::Numerical { context, condition })?
        }
    };
    let mut x = x_t.transpose();
    symmetrize(&mut x);
    Ok(x)
}

const MAX_PIVOT_RATIO: f64 = 1e14;

/// Solves `a x = b`; on failure returns the pivot-ratio condition estimate.
fn solve_checked(a: &DMatrix<f64>, b: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, f64> {
    let lu = a.clone().lu();
    let u = lu.u();
    let pivots = u.diagonal();
    let max = pivots.amax();
    let min = pivots.iter().fold(f64::INFINITY, |acc, p| acc.min(p.abs()));
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !condition.is_finite() || condition > MAX_PIVOT_RATIO {
        return Err(condition);
    }
    let x = lu.solve(b).ok_or(condition)?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(condition)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frob_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn sqrt_identity() {
        let s = DMatrix::<f64>::identity(4, 4);
        let r = sqrt_core(&s).unwrap();
        assert!(frob_rel(&(&r * r.transpose()), &s) < 1e-14);
    }

    #[test]
    fn sqrt_rank_deficient_two_by_two() {
        // eigenvalues {0.5, 0}; symmetric root is S/sqrt(0.5)
        let s = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
        let r = sqrt_core(&s).unwrap();
        assert!(frob_rel(&(&r * r.transpose()), &s) < 1e-12);
        let h = 0.353_553_390_593_273_8;
        assert!((r[(0, 0)] - h).abs() < 1e-12);
        assert!((r[(0, 1)] + h).abs() < 1e-12);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(sqrt_core(&s), Err(Error::Contract(_))));
    }

    #[test]
    fn sqrt_clamps_tiny_negative() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-13]);
        let r = sqrt_core(&s).unwrap();
        assert_eq!(r[(1, 1)], 0.0);
    }

    #[test]
    fn sqrt_empty() {
        assert_eq!(sqrt_core(&DMatrix::zeros(0, 0)).unwrap().nrows(), 0);
    }

    #[test]
    fn resolvent_matches_inverse_form() {
        let core = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]);
        let want = (core.clone().try_inverse().unwrap() + &m).try_inverse().unwrap();
        let got = core_resolvent(&core, &m, "test").unwrap();
        assert!(frob_rel(&got, &want) < 1e-13);
    }

    #[test]
    fn resolvent_zero_m_is_exact() {
        let core = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, -1.0]);
        let got = core_resolvent(&core, &DMatrix::zeros(2, 2), "test").unwrap();
        assert_eq!(got, core);
    }

    #[test]
    fn resolvent_singular_reports_condition() {
        // I + Σ M = 0 for Σ = -I, M = I.
        let core = -DMatrix::<f64>::identity(2, 2);
        let m = DMatrix::<f64>::identity(2, 2);
        match core_resolvent(&core, &m, "test") {
            Err(Error::Numerical { condition, .. }) => assert!(condition > 1e14),
            other => panic!("expected numerical failure, got {other:?}"),
        }
    }
}
