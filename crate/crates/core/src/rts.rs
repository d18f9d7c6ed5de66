//! Backward Rauch–Tung–Striebel smoothing of a filter trace in
//! diagonal-plus-low-rank form. Only beliefs and the process noise are
//! read; no task data is touched.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::dplr::{at_b, compress_symmetric, core_resolvent, scale_rows, DplrGain, DplrSym, ProcessNoise};
use crate::error::{contract, Result};
use crate::lgf::{BeliefTag, FilterTrace, GaussianBelief};

/// `G = (I + Q P)⁻¹` as `D^G + U^G Σ^G (V^G)ᵀ` with `D^G = (I + QD)⁻¹`,
/// `U^G = (I + QD)⁻¹QU`, `V^G = (I + QD)⁻¹U` and
/// `Σ^G = −(Σ⁻¹ + Uᵀ(I + QD)⁻¹QU)⁻¹`. Zero noise gives exactly `I`.
pub fn smoother_gain(p: &DplrSym, noise: &ProcessNoise) -> Result<DplrGain> {
    if noise.dim() != p.dim() {
        return Err(contract("smoother_gain: process noise dimension mismatch"));
    }
    if noise.is_zero() {
        return Ok(DplrGain::identity(p.dim()));
    }
    let q = noise.as_vector();
    let shrink = p.diag().zip_map(q, |d, q| 1.0 / (1.0 + q * d));
    let d = p.dim();
    if p.rank() == 0 {
        return DplrGain::new(shrink, DMatrix::zeros(d, 0), DMatrix::zeros(0, 0), DMatrix::zeros(d, 0));
    }
    let mut right = p.factor().clone();
    scale_rows(&mut right, &shrink);
    let mut left = p.factor().clone();
    scale_rows(&mut left, &q.component_mul(&shrink));
    let m = at_b(p.factor(), &left);
    let core = -core_resolvent(p.core(), &m, "smoother gain")?;
    DplrGain::new(shrink, left, core, right)
}

/// `m_t + G (m^s_{t+1} − m_t)`; the predicted mean of the random walk is `m_t`.
pub fn smooth_mean_step(mean: &DVector<f64>, next_smoothed: &DVector<f64>, gain: &DplrGain) -> DVector<f64> {
    mean + gain.matvec(&(next_smoothed - mean))
}

/// Outcome of one precision step.
#[derive(Debug, Clone)]
pub struct SmoothedPrecision {
    pub precision: DplrSym,
    /// Entries of `D^s_{t+1} − Q` raised to zero before use.
    pub clamped: usize,
}

/// Smoothed precision from
/// `C^s_t = C_t − G C_t Gᵀ + G (C^s_{t+1} − Q) Gᵀ`, which is the usual
/// `C_t + G (C^s_{t+1} − C⁻_{t+1}) Gᵀ` with `C⁻_{t+1} = C_t + Q`.
///
/// Both precisions are inverted to covariance form first. With
/// `G = Δ + U^G Σ^G (V^G)ᵀ` and `E = max(D^s_{t+1} − Q, 0)`, the sum splits
/// exactly into the diagonal `(1 − Δ²) D_c + Δ² E` plus a symmetric
/// low-rank term on the basis
/// `[U^G | Δ(E − D_c)V^G | (I − G)U_c | G U_c | G U^s]`. That term is
/// truncated to rank `k` by eigenvalue magnitude and the result inverted
/// back to a precision.
pub fn smooth_precision_step(
    filtered: &DplrSym,
    next_smoothed: &DplrSym,
    noise: &ProcessNoise,
    gain: &DplrGain,
    k: usize,
) -> Result<SmoothedPrecision> {
    let dim = filtered.dim();
    if next_smoothed.dim() != dim || noise.dim() != dim || gain.dim() != dim {
        return Err(contract("smooth_precision_step: dimension mismatch"));
    }
    let cov = filtered.invert()?;
    let next_cov = next_smoothed.invert()?;
    let q = noise.as_vector();

    let mut clamped = 0;
    let excess = DVector::from_fn(dim, |i, _| {
        let v = next_cov.diag()[i] - q[i];
        if v < 0.0 {
            clamped += 1;
            0.0
        } else {
            v
        }
    });
    if 2 * clamped > dim {
        warn!("smoother clamped {clamped} of {dim} entries of D^s - Q to zero");
    }

    let keep = gain.diag();
    let dc = cov.diag();
    let diag = DVector::from_fn(dim, |i, _| {
        let g2 = keep[i] * keep[i];
        (1.0 - g2) * dc[i] + g2 * excess[i]
    });
    let shift = &excess - dc;

    let kg = gain.rank();
    let kc = cov.rank();
    let ks = next_cov.rank();
    let m = 2 * kg + 2 * kc + ks;
    let mut basis = DMatrix::zeros(dim, m);
    let mut core = DMatrix::zeros(m, m);
    if kg > 0 {
        basis.columns_mut(0, kg).copy_from(gain.left());
        let mut y = gain.right().clone();
        scale_rows(&mut y, &keep.component_mul(&shift));
        basis.columns_mut(kg, kg).copy_from(&y);

        let mut weighted = gain.right().clone();
        scale_rows(&mut weighted, &shift);
        let sg = gain.core();
        let block = sg * at_b(gain.right(), &weighted) * sg.transpose();
        core.view_mut((0, 0), (kg, kg)).copy_from(&block);
        core.view_mut((0, kg), (kg, kg)).copy_from(sg);
        core.view_mut((kg, 0), (kg, kg)).copy_from(&sg.transpose());
    }
    if kc > 0 {
        // U_c Σ_c U_cᵀ − (G U_c) Σ_c (G U_c)ᵀ with U_c = A + B, B = G U_c.
        let at = 2 * kg;
        let through = gain.matmat(cov.factor());
        basis.columns_mut(at, kc).copy_from(&(cov.factor() - &through));
        basis.columns_mut(at + kc, kc).copy_from(&through);
        let sc = cov.core();
        core.view_mut((at, at), (kc, kc)).copy_from(sc);
        core.view_mut((at, at + kc), (kc, kc)).copy_from(sc);
        core.view_mut((at + kc, at), (kc, kc)).copy_from(sc);
    }
    if ks > 0 {
        let at = 2 * kg + 2 * kc;
        basis.columns_mut(at, ks).copy_from(&gain.matmat(next_cov.factor()));
        core.view_mut((at, at), (ks, ks)).copy_from(next_cov.core());
    }
    let (factor, values) = compress_symmetric(basis, &core, k.min(dim))?;
    let smoothed_cov = DplrSym::from_eigen_parts(diag, factor, values.as_slice())?;
    Ok(SmoothedPrecision { precision: smoothed_cov.invert()?, clamped })
}

/// Smoothed beliefs for every slot of the trace, in task order. The last
/// one equals the final filtered belief.
pub fn run_smoother(trace: &FilterTrace, k: usize) -> Result<Vec<GaussianBelief>> {
    let Some(last) = trace.beliefs.last() else {
        return Err(contract("run_smoother needs a non-empty trace"));
    };
    let n = trace.beliefs.len();
    let mut out: Vec<GaussianBelief> = Vec::with_capacity(n);
    out.push(GaussianBelief { tag: BeliefTag::Smoothed, ..last.clone() });
    for t in (0..n - 1).rev() {
        let filt = &trace.beliefs[t];
        let next = out.last().expect("seeded with the final belief");
        let gain = smoother_gain(&filt.precision, &trace.noise)?;
        let mean = smooth_mean_step(&filt.mean, &next.mean, &gain);
        let step = smooth_precision_step(&filt.precision, &next.precision, &trace.noise, &gain, k)?;
        out.push(GaussianBelief { mean, precision: step.precision, tag: BeliefTag::Smoothed });
    }
    out.reverse();
    Ok(out)
}

/// A slot the filter only predicted through, before and after smoothing.
#[derive(Debug, Clone)]
pub struct GapBelief {
    /// 1-based task index.
    pub task: usize,
    pub predicted: GaussianBelief,
    pub smoothed: GaussianBelief,
}

/// Smoothed and predict-only beliefs at every skipped slot of the trace.
pub fn infer_between(trace: &FilterTrace, k: usize) -> Result<Vec<GapBelief>> {
    let smoothed = run_smoother(trace, k)?;
    Ok(gap_beliefs(trace, &smoothed))
}

/// Pairs the skipped slots of `trace` with an existing smoothing pass.
pub fn gap_beliefs(trace: &FilterTrace, smoothed: &[GaussianBelief]) -> Vec<GapBelief> {
    trace
        .skipped
        .iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(i, _)| GapBelief { task: i + 1, predicted: trace.beliefs[i].clone(), smoothed: smoothed[i].clone() })
        .collect()
}
