use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{loss_and_grad, MlpParams};
use crate::dplr::DplrSym;
use crate::error::{contract, Error, Result};
use crate::rng::SplitMix64;

/// A differentiable weight-space penalty added to the data loss.
pub trait Penalty {
    fn value_and_grad(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)>;
}

/// `(λ/2)(θ − m)ᵀ P (θ − m)` with a DPLR precision `P`.
#[derive(Debug, Clone)]
pub struct Regularizer {
    anchor: DVector<f64>,
    precision: DplrSym,
    strength: f64,
}

impl Regularizer {
    pub fn new(anchor: DVector<f64>, precision: DplrSym, strength: f64) -> Result<Self> {
        if !(strength > 0.0) || !strength.is_finite() {
            return Err(contract(format!("regularization strength must be positive, got {strength}")));
        }
        if anchor.len() != precision.dim() {
            return Err(contract("anchor and precision dimensions differ"));
        }
        Ok(Self { anchor, precision, strength })
    }

    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn precision(&self) -> &DplrSym {
        &self.precision
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }
}

impl Penalty for Regularizer {
    fn value_and_grad(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        if theta.len() != self.anchor.len() {
            return Err(contract("parameter and anchor dimensions differ"));
        }
        let diff = theta - &self.anchor;
        let pd = self.precision.matvec(&diff);
        Ok((0.5 * self.strength * diff.dot(&pd), pd * self.strength))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-epoch learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant(f64),
    /// Linear from `start` at the first epoch to `end` at the last.
    Linear { start: f64, end: f64 },
}

impl LrSchedule {
    pub fn at(&self, epoch: usize, epochs: usize) -> f64 {
        match *self {
            LrSchedule::Constant(lr) => lr,
            LrSchedule::Linear { start, end } => {
                if epochs <= 1 {
                    start
                } else {
                    start + (end - start) * epoch as f64 / (epochs - 1) as f64
                }
            }
        }
    }

    fn is_valid(&self) -> bool {
        match *self {
            LrSchedule::Constant(lr) => lr > 0.0,
            LrSchedule::Linear { start, end } => start > 0.0 && end > 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub optimizer: Optimizer,
    /// Epoch `e` shuffles with `SplitMix64::new(seed + e)`.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 128,
            schedule: LrSchedule::Linear { start: 1e-3, end: 1e-4 },
            optimizer: Optimizer::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(contract("batch_size must be positive"));
        }
        if !self.schedule.is_valid() {
            return Err(contract("learning rates must be positive"));
        }
        Ok(())
    }
}

/// Mini-batch first-order minimisation of the (optionally penalised) mean loss.
///
/// Deterministic for a fixed `cfg.seed`. An empty dataset returns `p0`.
pub fn train_task<P: Penalty + ?Sized>(
    p0: &MlpParams,
    inputs: &DMatrix<f64>,
    labels: &[usize],
    penalty: Option<&P>,
    cfg: &TrainConfig,
) -> Result<MlpParams> {
    cfg.validate()?;
    let n = inputs.nrows();
    if labels.len() != n {
        return Err(contract(format!("{} labels for {n} inputs", labels.len())));
    }
    let mut params = p0.clone();
    if n == 0 || cfg.epochs == 0 {
        return Ok(params);
    }
    let d = params.dim();
    let mut first: DVector<f64> = DVector::zeros(d);
    let mut second: DVector<f64> = DVector::zeros(d);
    let mut t = 0i32;
    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.at(epoch, cfg.epochs);
        let order = SplitMix64::new(cfg.seed.wrapping_add(epoch as u64)).permutation(n);
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let x = inputs.select_rows(batch.iter());
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (mut loss, mut grad) = loss_and_grad(&params, &x, &y)?;
            if let Some(pen) = penalty {
                let (value, pgrad) = pen.value_and_grad(params.theta())?;
                loss += value;
                grad += pgrad;
            }
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training { epoch, step, loss });
            }
            t += 1;
            let theta = params.theta_mut();
            match cfg.optimizer {
                Optimizer::Sgd => theta.axpy(-lr, &grad, 1.0),
                Optimizer::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    for i in 0..d {
                        let g = grad[i];
                        first[i] = beta1 * first[i] + (1.0 - beta1) * g;
                        second[i] = beta2 * second[i] + (1.0 - beta2) * g * g;
                        let m_hat = first[i] / c1;
                        let v_hat = second[i] / c2;
                        theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
    Ok(params)
}
