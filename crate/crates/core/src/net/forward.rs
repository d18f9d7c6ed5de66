use nalgebra::{DMatrix, DVector};

use super::train::{Penalty, Regularizer};
use super::{LossKind, MlpParams};
use crate::error::{contract, Result};

/// Hidden activations of one forward pass; index `l` is the output of layer `l`.
pub(crate) struct Tape {
    pub hidden: Vec<DMatrix<f64>>,
    pub logits: DMatrix<f64>,
}

pub(crate) fn forward_tape(p: &MlpParams, inputs: &DMatrix<f64>) -> Result<Tape> {
    let arch = p.arch();
    if inputs.ncols() != arch.input_dim() {
        return Err(contract(format!(
            "input has {} features, network expects {}",
            inputs.ncols(),
            arch.input_dim()
        )));
    }
    let layers = arch.layers();
    let last = layers.len() - 1;
    let mut hidden = Vec::with_capacity(last);
    let mut logits = DMatrix::zeros(0, 0);
    for (l, slot) in layers.iter().enumerate() {
        let prev = if l == 0 { inputs } else { &hidden[l - 1] };
        let mut z = prev * p.weight_t(slot);
        let bias = p.bias(slot);
        for (j, mut col) in z.column_iter_mut().enumerate() {
            col.add_scalar_mut(bias[j]);
        }
        if l == last {
            logits = z;
        } else {
            z.apply(|v| *v = v.tanh());
            hidden.push(z);
        }
    }
    Ok(Tape { hidden, logits })
}

/// Logits (n×C) for a batch of row-vector inputs (n×d_in).
pub fn forward(p: &MlpParams, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(forward_tape(p, inputs)?.logits)
}

fn check_labels(labels: &[usize], n: usize, classes: usize) -> Result<()> {
    if labels.len() != n {
        return Err(contract(format!("{} labels for {n} inputs", labels.len())));
    }
    if n == 0 {
        return Err(contract("empty batch"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(contract(format!("label {bad} outside [0, {classes})")));
    }
    Ok(())
}

pub(crate) fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Mean loss and its gradient with respect to the logits.
fn output_loss(kind: LossKind, logits: &DMatrix<f64>, labels: &[usize]) -> (f64, DMatrix<f64>) {
    let (n, c) = logits.shape();
    let inv_n = 1.0 / n as f64;
    let mut delta = DMatrix::zeros(n, c);
    let mut total = 0.0;
    let mut row = vec![0.0; c];
    for i in 0..n {
        for j in 0..c {
            row[j] = logits[(i, j)];
        }
        match kind {
            LossKind::CrossEntropy => {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
                let lse = max + sum.ln();
                total += lse - row[labels[i]];
                for j in 0..c {
                    delta[(i, j)] = (row[j] - lse).exp() * inv_n;
                }
                delta[(i, labels[i])] -= inv_n;
            }
            LossKind::SquaredError => {
                for j in 0..c {
                    let target = if j == labels[i] { 1.0 } else { 0.0 };
                    let r = row[j] - target;
                    total += 0.5 * r * r;
                    delta[(i, j)] = r * inv_n;
                }
            }
        }
    }
    (total * inv_n, delta)
}

/// Reverse pass from output-gradient `delta` (n×C) to the flat gradient.
pub(crate) fn backward(p: &MlpParams, inputs: &DMatrix<f64>, tape: &Tape, delta: DMatrix<f64>) -> DVector<f64> {
    let layers = p.arch().layers();
    let mut grad = DVector::zeros(p.dim());
    let mut delta = delta;
    for l in (0..layers.len()).rev() {
        let slot = &layers[l];
        let prev = if l == 0 { inputs } else { &tape.hidden[l - 1] };
        let gw = prev.transpose() * &delta;
        grad.as_mut_slice()[slot.weight_offset..slot.bias_offset].copy_from_slice(gw.as_slice());
        for j in 0..slot.fan_out {
            grad[slot.bias_offset + j] = delta.column(j).sum();
        }
        if l > 0 {
            let mut next = &delta * p.weight_t(slot).transpose();
            next.zip_apply(&tape.hidden[l - 1], |d, a| *d *= 1.0 - a * a);
            delta = next;
        }
    }
    grad
}

pub fn loss_only(p: &MlpParams, inputs: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    check_labels(labels, inputs.nrows(), p.arch().output_dim())?;
    let tape = forward_tape(p, inputs)?;
    Ok(output_loss(p.arch().loss(), &tape.logits, labels).0)
}

/// Mean loss over the batch and its gradient.
pub fn loss_and_grad(p: &MlpParams, inputs: &DMatrix<f64>, labels: &[usize]) -> Result<(f64, DVector<f64>)> {
    check_labels(labels, inputs.nrows(), p.arch().output_dim())?;
    let tape = forward_tape(p, inputs)?;
    let (loss, delta) = output_loss(p.arch().loss(), &tape.logits, labels);
    let grad = backward(p, inputs, &tape, delta);
    Ok((loss, grad))
}

/// Loss plus `(λ/2)(θ − m)ᵀP(θ − m)`; the penalty gradient uses a DPLR matvec.
pub fn reg_loss_and_grad(
    p: &MlpParams,
    inputs: &DMatrix<f64>,
    labels: &[usize],
    reg: &Regularizer,
) -> Result<(f64, DVector<f64>)> {
    let (loss, mut grad) = loss_and_grad(p, inputs, labels)?;
    let (penalty, pgrad) = reg.value_and_grad(p.theta())?;
    grad += pgrad;
    Ok((loss + penalty, grad))
}
