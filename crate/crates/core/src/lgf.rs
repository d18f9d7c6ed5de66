//! Sequential Laplace–Gaussian filtering over network weights with a
//! diagonal-plus-low-rank precision.

use std::time::Instant;

use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dplr::{compress, discarded_diagonal, sqrt_core, DplrSym, ProcessNoise};
use crate::error::{contract, Result};
use crate::net::{ggn_factors, init_params, train_task, Arch, MlpParams, Regularizer, TrainConfig};
use crate::rng::{derive_seed, stream};
use crate::tasks::TaskDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeliefTag {
    Filtered,
    Predicted,
    Smoothed,
}

/// `N(mean, precision⁻¹)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub precision: DplrSym,
    pub tag: BeliefTag,
}

impl GaussianBelief {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Regularization strength per 1-based task index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaSchedule {
    Constant(f64),
    /// `intercept + slope · (t − 1)`.
    Affine { intercept: f64, slope: f64 },
}

impl LambdaSchedule {
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            LambdaSchedule::Constant(v) => v,
            LambdaSchedule::Affine { intercept, slope } => intercept + slope * (t as f64 - 1.0),
        }
    }

    pub fn validate(&self, tasks: usize) -> Result<()> {
        for t in 1..=tasks {
            let v = self.at(t);
            if !(v > 0.0) || !v.is_finite() {
                return Err(contract(format!("lambda({t}) = {v} is not positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub lambda: LambdaSchedule,
    /// Rank budget of the low-rank precision term.
    pub rank: usize,
    pub noise: ProcessNoise,
    /// Prior precision scale: `P₀ = λ₀ I`.
    pub initial_precision: f64,
    pub train: TrainConfig,
    pub curvature_samples: usize,
    pub chunk_size: usize,
    /// Add the energy dropped by the truncation to the diagonal.
    pub tail_to_diag: bool,
    /// Base seed. Initialization uses it directly; task `t` shuffles with
    /// `derive_seed(seed + t, SHUFFLE)` and draws curvature points from
    /// `seed + t`.
    pub seed: u64,
}

impl FilterConfig {
    /// Defaults with rank `10·C` and no process noise.
    pub fn new(arch: &Arch) -> Self {
        Self {
            lambda: LambdaSchedule::Constant(1.0),
            rank: 10 * arch.output_dim(),
            noise: ProcessNoise::zeros(arch.num_params()),
            initial_precision: 1e-4,
            train: TrainConfig::default(),
            curvature_samples: 100,
            chunk_size: 4,
            tail_to_diag: false,
            seed: 0,
        }
    }

    pub fn validate(&self, arch: &Arch, tasks: usize) -> Result<()> {
        self.lambda.validate(tasks)?;
        self.train.validate()?;
        if self.rank == 0 {
            return Err(contract("rank must be at least 1"));
        }
        if !(self.initial_precision > 0.0) || !self.initial_precision.is_finite() {
            return Err(contract("initial precision must be positive"));
        }
        if self.noise.dim() != arch.num_params() {
            return Err(contract(format!(
                "process noise has {} entries, network has {} parameters",
                self.noise.dim(),
                arch.num_params()
            )));
        }
        if self.chunk_size == 0 {
            return Err(contract("chunk_size must be positive"));
        }
        Ok(())
    }

    pub fn train_for(&self, t: usize) -> TrainConfig {
        TrainConfig { seed: derive_seed(self.seed.wrapping_add(t as u64), stream::SHUFFLE), ..self.train.clone() }
    }

    pub fn curvature_seed(&self, t: usize) -> u64 {
        self.seed.wrapping_add(t as u64)
    }
}

/// Bookkeeping for one update step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub task: usize,
    pub skipped: bool,
    pub factor_columns: usize,
    pub rank: usize,
    pub train_seconds: f64,
    pub update_seconds: f64,
}

/// Filtered beliefs in task order (index `t − 1`), with the noise and
/// configuration that produced them.
#[derive(Debug, Clone)]
pub struct FilterTrace {
    pub arch: Arch,
    pub beliefs: Vec<GaussianBelief>,
    pub skipped: Vec<bool>,
    pub noise: ProcessNoise,
    pub config: FilterConfig,
    pub reports: Vec<UpdateReport>,
}

impl FilterTrace {
    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    /// Floats held by all stored beliefs.
    pub fn storage_len(&self) -> usize {
        self.beliefs.iter().map(|b| b.mean.len() + b.precision.storage_len()).sum()
    }
}

/// The prior `N(init_params, (λ₀ I)⁻¹)`.
pub fn initial_belief(arch: &Arch, cfg: &FilterConfig) -> GaussianBelief {
    let p = init_params(arch, cfg.seed);
    GaussianBelief {
        mean: p.theta().clone(),
        precision: DplrSym::scaled_identity(arch.num_params(), cfg.initial_precision),
        tag: BeliefTag::Filtered,
    }
}

/// Random-walk predict: mean unchanged, precision `(P⁻¹ + Q)⁻¹`.
pub fn predict(b: &GaussianBelief, noise: &ProcessNoise) -> Result<GaussianBelief> {
    if b.tag == BeliefTag::Predicted {
        return Err(contract("predict expects a filtered belief"));
    }
    Ok(GaussianBelief { mean: b.mean.clone(), precision: b.precision.predict_precision(noise)?, tag: BeliefTag::Predicted })
}

/// `[U⁻ (Σ⁻)^{1/2} | J₁Ĥ₁^{1/2} | …]`.
pub fn update_factor(pred: &DplrSym, blocks: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let d = pred.dim();
    let prior_cols = pred.rank();
    let total = prior_cols + blocks.iter().map(|b| b.ncols()).sum::<usize>();
    let mut w = DMatrix::zeros(d, total);
    if prior_cols > 0 {
        let root = pred.factor() * sqrt_core(pred.core())?;
        w.columns_mut(0, prior_cols).copy_from(&root);
    }
    let mut at = prior_cols;
    for b in blocks {
        if b.nrows() != d {
            return Err(contract("curvature block has wrong row count"));
        }
        w.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    Ok(w)
}

/// Laplace precision at a mode: `D⁻ + tSVD_k(W)` with the predicted
/// diagonal carried through.
pub fn laplace_precision(pred: &DplrSym, blocks: &[DMatrix<f64>], rank: usize, tail_to_diag: bool) -> Result<DplrSym> {
    let w = update_factor(pred, blocks)?;
    let (d, r) = w.shape();
    if r == 0 {
        return Ok(DplrSym::from_diag(pred.diag().clone()));
    }
    let kept = compress(&w, rank.min(d).min(r))?;
    let mut diag = pred.diag().clone();
    if tail_to_diag {
        diag += discarded_diagonal(&w, &kept);
    }
    kept.with_diag(diag)
}

/// Regularized training on `data` followed by the Laplace step at the
/// trained weights. `t` is the 1-based task index.
pub fn update(
    pred: &GaussianBelief,
    arch: &Arch,
    data: &TaskDataset,
    cfg: &FilterConfig,
    t: usize,
) -> Result<(GaussianBelief, UpdateReport)> {
    if pred.tag != BeliefTag::Predicted {
        return Err(contract("update expects a predicted belief"));
    }
    let start = Instant::now();
    let p0 = MlpParams::new(arch.clone(), pred.mean.clone())?;
    let reg = Regularizer::new(pred.mean.clone(), pred.precision.clone(), cfg.lambda.at(t))?;
    let trained = train_task(&p0, &data.inputs, &data.labels, Some(&reg), &cfg.train_for(t))?;
    let train_seconds = start.elapsed().as_secs_f64();
    let samples = cfg.curvature_samples.min(data.len());
    let factors = ggn_factors(&trained, &data.inputs, samples, cfg.chunk_size, cfg.curvature_seed(t))?;
    let blocks: Vec<DMatrix<f64>> = factors.into_iter().map(|f| f.block).collect();
    let factor_columns = pred.precision.rank() + blocks.iter().map(|b| b.ncols()).sum::<usize>();
    let precision = laplace_precision(&pred.precision, &blocks, cfg.rank, cfg.tail_to_diag)?;
    let report = UpdateReport {
        task: t,
        skipped: false,
        factor_columns,
        rank: precision.rank(),
        train_seconds,
        update_seconds: start.elapsed().as_secs_f64() - train_seconds,
    };
    debug!("task {t}: {factor_columns} factor columns compressed to rank {}", report.rank);
    Ok((GaussianBelief { mean: trained.theta().clone(), precision, tag: BeliefTag::Filtered }, report))
}

/// Predict then update for every task; gap-marked or empty tasks are
/// predict-only and their predicted belief is stored as the filtered one.
pub fn run_filter(arch: &Arch, tasks: &[&TaskDataset], cfg: &FilterConfig) -> Result<FilterTrace> {
    if tasks.is_empty() {
        return Err(contract("run_filter needs at least one task"));
    }
    cfg.validate(arch, tasks.len())?;
    for d in tasks {
        if !d.is_empty() && d.input_dim() != arch.input_dim() {
            return Err(contract(format!("task {} has input dim {}, network expects {}", d.task_id, d.input_dim(), arch.input_dim())));
        }
    }
    let mut current = initial_belief(arch, cfg);
    let mut trace = FilterTrace {
        arch: arch.clone(),
        beliefs: Vec::with_capacity(tasks.len()),
        skipped: Vec::with_capacity(tasks.len()),
        noise: cfg.noise.clone(),
        config: cfg.clone(),
        reports: Vec::with_capacity(tasks.len()),
    };
    for (i, data) in tasks.iter().enumerate() {
        let t = i + 1;
        let pred = predict(&current, &cfg.noise)?;
        let skip = data.gap || data.is_empty();
        let (next, report) = if skip {
            let report = UpdateReport {
                task: t,
                skipped: true,
                factor_columns: 0,
                rank: pred.precision.rank(),
                train_seconds: 0.0,
                update_seconds: 0.0,
            };
            (GaussianBelief { tag: BeliefTag::Filtered, ..pred }, report)
        } else {
            update(&pred, arch, data, cfg, t)?
        };
        info!("filtered task {t}/{} (skipped: {skip}, rank {})", tasks.len(), next.precision.rank());
        trace.beliefs.push(next.clone());
        trace.skipped.push(skip);
        trace.reports.push(report);
        current = next;
    }
    Ok(trace)
}
