//! Truncated SVD of a tall, skinny factor through its Gram matrix.

use nalgebra::{DMatrix, DVector};

use super::at_b;
use super::small::symmetrize;
use super::sym::DplrSym;
use crate::error::{contract, Result};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Leading left singular vectors and singular values of a factor `W`, so
/// that `basis · diag(s²) · basisᵀ` is the best PSD approximation of `W·Wᵀ`
/// of that rank.
#[derive(Debug, Clone)]
pub struct Compressed {
    pub basis: DMatrix<f64>,
    pub singular_values: DVector<f64>,
}

impl Compressed {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `diag + basis · diag(s²) · basisᵀ`.
    pub fn with_diag(self, diag: DVector<f64>) -> Result<DplrSym> {
        let squares: Vec<f64> = self.singular_values.iter().map(|s| s * s).collect();
        DplrSym::from_eigen_parts(diag, self.basis, &squares)
    }
}

/// Rank-`k` truncated SVD of `w` (D×r) via the r×r Gram matrix `WᵀW`.
///
/// At most `k` directions are returned; directions whose singular value is
/// below [`RANK_TOL`]`·s_max` are dropped, so the result can be shorter than
/// `k` when `W` is rank deficient. Equal singular values keep their Gram
/// eigenvector order. No D×D buffer is formed.
pub fn compress(w: &DMatrix<f64>, k: usize) -> Result<Compressed> {
    let (d, r) = w.shape();
    if r == 0 {
        return Err(contract("compress: factor has no columns"));
    }
    if k > d.min(r) {
        return Err(contract(format!("compress: rank {k} exceeds min(D, r) = {}", d.min(r))));
    }
    let gram = at_b(w, w);
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let s_max = eig.eigenvalues[order[0]].max(0.0).sqrt();
    let keep: Vec<usize> = order
        .into_iter()
        .take(k)
        .take_while(|&i| s_max > 0.0 && eig.eigenvalues[i].max(0.0).sqrt() > RANK_TOL * s_max)
        .collect();
    if keep.is_empty() {
        return Ok(Compressed { basis: DMatrix::zeros(d, 0), singular_values: DVector::zeros(0) });
    }
    let m = keep.len();
    let mut right = DMatrix::zeros(r, m);
    let mut s = DVector::zeros(m);
    for (j, &i) in keep.iter().enumerate() {
        s[j] = eig.eigenvalues[i].sqrt();
        right.set_column(j, &(eig.eigenvectors.column(i) / s[j]));
    }
    let basis = w * right;
    Ok(reorthonormalize(basis, s))
}

/// Restores `UᵀU = I` lost to Gram-route round-off while keeping
/// `U diag(s²) Uᵀ` fixed.
fn reorthonormalize(basis: DMatrix<f64>, s: DVector<f64>) -> Compressed {
    let squares = s.map(|v| v * v);
    let (basis, values) = reorthonormalize_signed(basis, squares);
    Compressed { basis, singular_values: values.map(|v| v.max(0.0).sqrt()) }
}

/// With `UᵀU = LLᵀ`, rotates `U L⁻ᵀ` by the eigenvectors of `Lᵀ diag(λ) L`
/// so that `U diag(λ) Uᵀ` is unchanged and the new basis is orthonormal.
/// Output eigenvalues are sorted by decreasing magnitude.
fn reorthonormalize_signed(basis: DMatrix<f64>, values: DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let m = values.len();
    let overlap = at_b(&basis, &basis);
    let drift = (&overlap - DMatrix::<f64>::identity(m, m)).amax();
    if drift <= 1e-13 {
        return (basis, values);
    }
    let Some(chol) = overlap.cholesky() else {
        return (basis, values);
    };
    let l = chol.l();
    let Some(l_inv) = l.clone().try_inverse() else {
        return (basis, values);
    };
    let q = &basis * l_inv.transpose();
    let mid = l.transpose() * DMatrix::from_diagonal(&values) * &l;
    let (rot, values) = sorted_eigen(mid);
    (q * rot, values)
}

/// Eigenpairs of a symmetric matrix ordered by decreasing `|λ|`; ties keep
/// the solver's order.
fn sorted_eigen(mut a: DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    symmetrize(&mut a);
    let m = a.nrows();
    let eig = a.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].abs().total_cmp(&eig.eigenvalues[x].abs()));
    let mut vectors = DMatrix::zeros(m, m);
    let mut values = DVector::zeros(m);
    for (j, &i) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(i));
        values[j] = eig.eigenvalues[i];
    }
    (vectors, values)
}

/// Best rank-`k` approximation of a symmetric, possibly indefinite
/// `B · M · Bᵀ` (B is D×m), returned as an orthonormal basis and signed
/// eigenvalues ordered by decreasing magnitude.
///
/// Columns of `B` are rescaled to unit norm before the Gram step so that
/// blocks of very different scale do not lose accuracy. Eigenvalues below
/// [`RANK_TOL`] of the largest magnitude are dropped. Cost is `O(D·m²)`.
pub fn compress_symmetric(basis: DMatrix<f64>, core: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (d, m) = basis.shape();
    if core.shape() != (m, m) {
        return Err(contract(format!("compress_symmetric: core is {:?}, basis has {m} columns", core.shape())));
    }
    let empty = || (DMatrix::zeros(d, 0), DVector::zeros(0));
    if m == 0 || k == 0 {
        return Ok(empty());
    }
    let norms = DVector::from_iterator(m, basis.column_iter().map(|c| c.norm()));
    let live: Vec<usize> = (0..m).filter(|&j| norms[j] > 0.0).collect();
    if live.is_empty() {
        return Ok(empty());
    }
    // Normalise in place; only copy when zero columns must be dropped.
    let mut unit = if live.len() == m { basis } else { basis.select_columns(live.iter()) };
    for (j, mut col) in unit.column_iter_mut().enumerate() {
        col /= norms[live[j]];
    }
    let scaled_core = DMatrix::from_fn(live.len(), live.len(), |a, b| core[(live[a], live[b])] * norms[live[a]] * norms[live[b]]);

    let gram = at_b(&unit, &unit);
    let (gv, gl) = sorted_eigen(gram);
    let top = gl[0].max(0.0);
    let kept: Vec<usize> = (0..gl.len()).filter(|&i| gl[i] > 1e-20 * top).collect();
    if kept.is_empty() {
        return Ok(empty());
    }
    let mut to_orth = DMatrix::zeros(live.len(), kept.len());
    let mut r = DMatrix::zeros(kept.len(), live.len());
    for (j, &i) in kept.iter().enumerate() {
        let s = gl[i].sqrt();
        to_orth.set_column(j, &(gv.column(i) / s));
        r.set_row(j, &(gv.column(i).transpose() * s));
    }
    let mid = &r * scaled_core * r.transpose();
    let (ev, el) = sorted_eigen(mid);
    let largest = el.get(0).map_or(0.0, |v| v.abs());
    let take = el.iter().take(k).take_while(|v| largest > 0.0 && v.abs() > RANK_TOL * largest).count();
    if take == 0 {
        return Ok(empty());
    }
    // Fold the small change of basis first so only a D×take block is formed.
    let out = &unit * (to_orth * ev.columns(0, take));
    let values = el.rows(0, take).into_owned();
    Ok(reorthonormalize_signed(out, values))
}

/// Per-coordinate energy of `W·Wᵀ` discarded by the truncation:
/// `diag(W Wᵀ) − diag(U diag(s²) Uᵀ)`, clamped at zero.
pub fn discarded_diagonal(w: &DMatrix<f64>, kept: &Compressed) -> DVector<f64> {
    let d = w.nrows();
    let mut out = DVector::zeros(d);
    for i in 0..d {
        let full: f64 = w.row(i).iter().map(|v| v * v).sum();
        let held: f64 = kept
            .basis
            .row(i)
            .iter()
            .zip(kept.singular_values.iter())
            .map(|(u, s)| (u * s) * (u * s))
            .sum();
        out[i] = (full - held).max(0.0);
    }
    out
}
