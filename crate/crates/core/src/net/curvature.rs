//! Output Jacobians and generalized Gauss-Newton factors.

use nalgebra::{DMatrix, DMatrixViewMut};

use super::forward::{forward_tape, softmax_row};
use super::{LossKind, MlpParams};
use crate::dplr::sqrt_core;
use crate::error::{contract, Result};
use crate::rng::{derive_seed, stream, SplitMix64};

/// One chunk `[J_i Ĥ_i^{1/2}]_i` of GGN columns (D × chunk·C).
#[derive(Debug, Clone)]
pub struct CurvatureFactor {
    pub block: DMatrix<f64>,
}

impl CurvatureFactor {
    pub fn columns(&self) -> usize {
        self.block.ncols()
    }
}

/// Hessian of the per-sample loss with respect to the outputs.
pub fn output_hessian(loss: LossKind, logits: &[f64]) -> DMatrix<f64> {
    let c = logits.len();
    match loss {
        LossKind::CrossEntropy => {
            let p = softmax_row(logits);
            DMatrix::from_fn(c, c, |i, j| if i == j { p[i] - p[i] * p[j] } else { -p[i] * p[j] })
        }
        LossKind::SquaredError => DMatrix::identity(c, c),
    }
}

/// `R` with `R·Rᵀ = diag(p) − p·pᵀ`, `p = softmax(logits)`.
pub fn output_hessian_sqrt(logits: &[f64]) -> Result<DMatrix<f64>> {
    sqrt_core(&output_hessian(LossKind::CrossEntropy, logits))
}

fn loss_hessian_sqrt(loss: LossKind, logits: &[f64]) -> Result<DMatrix<f64>> {
    match loss {
        LossKind::CrossEntropy => output_hessian_sqrt(logits),
        LossKind::SquaredError => Ok(DMatrix::identity(logits.len(), logits.len())),
    }
}

/// Writes `J · seeds` (D × S) for one sample into `out`, with `J` the
/// D×C Jacobian of the logits. One reverse pass per seed column.
fn jacobian_times(
    p: &MlpParams,
    input: &[f64],
    hidden: &[Vec<f64>],
    seeds: &DMatrix<f64>,
    mut out: DMatrixViewMut<'_, f64>,
) {
    let layers = p.arch().layers();
    let mut delta = seeds.transpose();
    for l in (0..layers.len()).rev() {
        let slot = &layers[l];
        let a: &[f64] = if l == 0 { input } else { &hidden[l - 1] };
        for s in 0..delta.nrows() {
            let mut col = out.column_mut(s);
            let col = col.as_mut_slice();
            for j in 0..slot.fan_out {
                let d = delta[(s, j)];
                let w = &mut col[slot.weight_offset + j * slot.fan_in..slot.weight_offset + (j + 1) * slot.fan_in];
                for (wi, ai) in w.iter_mut().zip(a) {
                    *wi = d * ai;
                }
                col[slot.bias_offset + j] = d;
            }
        }
        if l > 0 {
            let mut next = &delta * p.weight_t(slot).transpose();
            for mut row in next.row_iter_mut() {
                for (v, ai) in row.iter_mut().zip(a) {
                    *v *= 1.0 - ai * ai;
                }
            }
            delta = next;
        }
    }
}

fn single_tape(p: &MlpParams, input: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let x = DMatrix::from_row_slice(1, input.len(), input);
    let tape = forward_tape(p, &x)?;
    let hidden = tape.hidden.iter().map(|h| h.iter().copied().collect()).collect();
    Ok((hidden, tape.logits.iter().copied().collect()))
}

/// D×C Jacobian of the logits for one input; column `j` is `∂f_j/∂θ`.
pub fn per_sample_jacobian(p: &MlpParams, input: &[f64]) -> Result<DMatrix<f64>> {
    let (hidden, _) = single_tape(p, input)?;
    let c = p.arch().output_dim();
    let seeds = DMatrix::identity(c, c);
    let mut out = DMatrix::zeros(p.dim(), c);
    jacobian_times(p, input, &hidden, &seeds, out.as_view_mut());
    Ok(out)
}

/// GGN factors of the summed loss over `curvature_samples` points drawn
/// without replacement from the `CURVATURE` stream of `seed`.
///
/// Each sample contributes the D×C block `J_i Ĥ_i^{1/2}`; consecutive
/// samples are packed `chunk_size` at a time (the last chunk may be short).
/// The sum of `block·blockᵀ` over the result is `Σ_i J_i Ĥ_i J_iᵀ`.
pub fn ggn_factors(
    p: &MlpParams,
    inputs: &DMatrix<f64>,
    curvature_samples: usize,
    chunk_size: usize,
    seed: u64,
) -> Result<Vec<CurvatureFactor>> {
    let n = inputs.nrows();
    if curvature_samples > n {
        return Err(contract(format!("requested {curvature_samples} curvature samples from {n} points")));
    }
    if chunk_size == 0 {
        return Err(contract("chunk_size must be positive"));
    }
    if curvature_samples == 0 {
        return Ok(Vec::new());
    }
    let mut rng = SplitMix64::new(derive_seed(seed, stream::CURVATURE));
    let picked = rng.sample_without_replacement(n, curvature_samples);
    let sub = inputs.select_rows(picked.iter());
    let tape = forward_tape(p, &sub)?;
    let c = p.arch().output_dim();
    let d = p.dim();
    let loss = p.arch().loss();
    let mut factors = Vec::with_capacity(curvature_samples.div_ceil(chunk_size));
    for start in (0..curvature_samples).step_by(chunk_size) {
        let count = chunk_size.min(curvature_samples - start);
        let mut block = DMatrix::zeros(d, count * c);
        for local in 0..count {
            let i = start + local;
            let input: Vec<f64> = sub.row(i).iter().copied().collect();
            let hidden: Vec<Vec<f64>> = tape.hidden.iter().map(|h| h.row(i).iter().copied().collect()).collect();
            let logits: Vec<f64> = tape.logits.row(i).iter().copied().collect();
            let root = loss_hessian_sqrt(loss, &logits)?;
            jacobian_times(p, &input, &hidden, &root, block.columns_mut(local * c, c));
        }
        factors.push(CurvatureFactor { block });
    }
    Ok(factors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{forward, init_params, Activation, Arch, ParamIndex};
    use nalgebra::DVector;

    #[test]
    fn two_class_half_half() {
        let r = output_hessian_sqrt(&[0.3, 0.3]).unwrap();
        let h = &r * r.transpose();
        let want = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
        assert!((h - want).amax() < 1e-12);
    }

    #[test]
    fn saturated_logits_vanish() {
        let r = output_hessian_sqrt(&[20.0, 0.0, 0.0]).unwrap();
        assert!((&r * r.transpose()).amax() < 1e-6);
    }

    #[test]
    fn hessian_rows_sum_to_zero() {
        let r = output_hessian_sqrt(&[0.1, -1.2, 2.0, 0.4]).unwrap();
        let h = &r * r.transpose();
        for i in 0..4 {
            assert!(h.row(i).sum().abs() < 1e-10);
        }
        let direct = output_hessian(LossKind::CrossEntropy, &[0.1, -1.2, 2.0, 0.4]);
        assert!((h - direct).norm() < 1e-8);
    }

    #[test]
    fn linear_model_jacobian_scatters_input() {
        let arch = Arch::mlp(&[3, 2]).unwrap();
        let p = init_params(&arch, 1);
        let x = [0.5, -1.0, 2.0];
        let j = per_sample_jacobian(&p, &x).unwrap();
        for out in 0..2 {
            for row in 0..2 {
                for col in 0..3 {
                    let f = arch.flat_index(ParamIndex::Weight { layer: 0, row, col }).unwrap();
                    let want = if row == out { x[col] } else { 0.0 };
                    assert_eq!(j[(f, out)], want);
                }
                let b = arch.flat_index(ParamIndex::Bias { layer: 0, row }).unwrap();
                assert_eq!(j[(b, out)], if row == out { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn jacobian_matches_directional_difference() {
        let arch = Arch::mlp(&[3, 5, 4]).unwrap();
        let p = init_params(&arch, 9);
        let x = [0.3, -0.7, 1.1];
        let j = per_sample_jacobian(&p, &x).unwrap();
        let v = DVector::from_fn(p.dim(), |i, _| ((i * 7) % 5) as f64 - 2.0);
        let h = 1e-6;
        let xm = DMatrix::from_row_slice(1, 3, &x);
        let fp = forward(&p.with_theta(p.theta() + &v * h).unwrap(), &xm).unwrap();
        let fm = forward(&p.with_theta(p.theta() - &v * h).unwrap(), &xm).unwrap();
        let jv = j.transpose() * &v;
        for c in 0..4 {
            let fd = (fp[(0, c)] - fm[(0, c)]) / (2.0 * h);
            assert!((fd - jv[c]).abs() <= 1e-5 * jv[c].abs().max(1.0));
        }
        assert_eq!(j, per_sample_jacobian(&p, &x).unwrap());
    }

    #[test]
    fn squared_error_single_sample_outer_product() {
        let arch = Arch::new(vec![2, 2], Activation::Tanh, LossKind::SquaredError).unwrap();
        let p = init_params(&arch, 4);
        let x = DMatrix::from_row_slice(1, 2, &[1.5, -0.5]);
        let f = ggn_factors(&p, &x, 1, 1, 0).unwrap();
        assert_eq!(f.len(), 1);
        let j = per_sample_jacobian(&p, &[1.5, -0.5]).unwrap();
        let ggn = &f[0].block * f[0].block.transpose();
        assert!((ggn - &j * j.transpose()).amax() < 1e-14);
    }

    #[test]
    fn chunking_and_errors() {
        let arch = Arch::mlp(&[2, 3, 2]).unwrap();
        let p = init_params(&arch, 4);
        let x = DMatrix::from_fn(7, 2, |i, j| (i + j) as f64 * 0.1);
        let f = ggn_factors(&p, &x, 5, 2, 1).unwrap();
        assert_eq!(f.iter().map(|b| b.columns()).collect::<Vec<_>>(), vec![4, 4, 2]);
        assert!(ggn_factors(&p, &x, 8, 2, 1).is_err());
        assert!(ggn_factors(&p, &x, 0, 2, 1).unwrap().is_empty());
    }
}
