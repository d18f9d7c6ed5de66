//! Task-sequence constructions. All are pure functions of their inputs.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Split, Task, TaskDataset};
use crate::error::{contract, Result};
use crate::rng::{derive_seed, stream, SplitMix64};

/// Dark to bright.
pub const DEFAULT_SHIFTS: [f64; 5] = [-0.2, -0.1, 0.0, 0.1, 0.2];

fn relabel(mut d: TaskDataset, task_id: usize) -> TaskDataset {
    d.task_id = task_id;
    d
}

/// Draws `m` points without replacement (keeping their original order), or
/// returns the set unchanged when `m` is `None` or at least its size.
pub fn subsample(d: &TaskDataset, m: Option<usize>, seed: u64) -> TaskDataset {
    match m {
        Some(m) if m < d.len() => {
            let mut rows = SplitMix64::new(seed).sample_without_replacement(d.len(), m);
            rows.sort_unstable();
            d.select(&rows)
        }
        _ => d.clone(),
    }
}

fn subsample_seed(seed: u64, task: usize) -> u64 {
    derive_seed(seed.wrapping_add(task as u64), stream::SUBSAMPLE)
}

/// `tasks` pixel-permuted copies of `(train, test)`; task 1 keeps the
/// identity permutation. Training sets are subsampled per task.
pub fn make_permuted(train: &TaskDataset, test: &TaskDataset, tasks: usize, seed: u64, train_points: Option<usize>) -> Result<Vec<Task>> {
    if tasks == 0 {
        return Err(contract("need at least one task"));
    }
    let d = train.input_dim();
    let mut out = Vec::with_capacity(tasks);
    for t in 1..=tasks {
        let perm: Vec<usize> = if t == 1 {
            (0..d).collect()
        } else {
            SplitMix64::new(derive_seed(seed.wrapping_add(t as u64), stream::PERMUTATION)).permutation(d)
        };
        let apply = |x: &TaskDataset| {
            let mut y = x.clone();
            y.inputs = x.inputs.select_columns(perm.iter());
            relabel(y, t)
        };
        let sub = subsample(train, train_points, subsample_seed(seed, t));
        out.push(Task { train: apply(&sub), test: apply(test) });
    }
    Ok(out)
}

/// Labels 0–4 then labels 5–9; the label space stays 10-wide.
pub fn make_disjoint(train: &TaskDataset, test: &TaskDataset, seed: u64, train_points: Option<usize>) -> Vec<Task> {
    let split = |d: &TaskDataset, low: bool, t: usize| {
        let rows: Vec<usize> = (0..d.len()).filter(|&i| (d.labels[i] < 5) == low).collect();
        relabel(d.select(&rows), t)
    };
    [(true, 1), (false, 2)]
        .into_iter()
        .map(|(low, t)| {
            let tr = split(train, low, t);
            Task { train: subsample(&tr, train_points, subsample_seed(seed, t)), test: split(test, low, t) }
        })
        .collect()
}

/// Task `t` sees `(clip(x + Δ_t, 0, 1) − μ) / σ` with the same `μ`, `σ`
/// for every task, so the shift survives normalization.
pub fn make_brightness(
    train: &TaskDataset,
    test: &TaskDataset,
    shifts: &[f64],
    mu: f64,
    sigma: f64,
    seed: u64,
    train_points: Option<usize>,
) -> Result<Vec<Task>> {
    if shifts.is_empty() {
        return Err(contract("need at least one brightness shift"));
    }
    if !(sigma > 0.0) || !mu.is_finite() || shifts.iter().any(|s| !s.is_finite()) {
        return Err(contract("brightness parameters must be finite with positive scale"));
    }
    let shift = |x: &TaskDataset, delta: f64, t: usize| {
        let mut y = x.clone();
        y.inputs.apply(|v| *v = ((*v + delta).clamp(0.0, 1.0) - mu) / sigma);
        relabel(y, t)
    };
    Ok(shifts
        .iter()
        .enumerate()
        .map(|(i, &delta)| {
            let t = i + 1;
            let sub = subsample(train, train_points, subsample_seed(seed, t));
            Task { train: shift(&sub, delta, t), test: shift(test, delta, t) }
        })
        .collect())
}

/// Seeded 2-D Gaussian blobs. Class `c` is centred at
/// `separation·(cos 2πc/C, sin 2πc/C) + (t−1)·drift` for task `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub tasks: usize,
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub separation: f64,
    pub spread: f64,
    pub drift: [f64; 2],
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { tasks: 3, classes: 2, train_per_class: 50, test_per_class: 50, separation: 2.0, spread: 0.5, drift: [0.0, 0.0] }
    }
}

pub fn make_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Vec<Task>> {
    if spec.tasks == 0 || !(2..=3).contains(&spec.classes) {
        return Err(contract("synthetic tasks need T ≥ 1 and 2 or 3 classes"));
    }
    if !(spec.spread > 0.0) || !spec.separation.is_finite() || spec.drift.iter().any(|v| !v.is_finite()) {
        return Err(contract("synthetic blob parameters must be finite with positive spread"));
    }
    let mut rng = SplitMix64::new(derive_seed(seed, stream::SYNTHETIC));
    let c = spec.classes;
    let mut draw = |per_class: usize, t: usize, split: Split| {
        let n = per_class * c;
        let mut x = DMatrix::zeros(n, 2);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % c;
            let angle = 2.0 * PI * class as f64 / c as f64;
            let shift = (t - 1) as f64;
            x[(i, 0)] = spec.separation * angle.cos() + shift * spec.drift[0] + spec.spread * rng.normal();
            x[(i, 1)] = spec.separation * angle.sin() + shift * spec.drift[1] + spec.spread * rng.normal();
            y.push(class);
        }
        TaskDataset { inputs: x, labels: y, task_id: t, split, gap: false }
    };
    Ok((1..=spec.tasks)
        .map(|t| {
            let train = draw(spec.train_per_class, t, Split::Train);
            let test = draw(spec.test_per_class, t, Split::Test);
            Task { train, test }
        })
        .collect())
}

/// Empties the training split of the 1-based task indices in `gaps`; the
/// test split is kept so the gap slot can still be evaluated.
pub fn insert_gaps(mut tasks: Vec<Task>, gaps: &[usize]) -> Result<Vec<Task>> {
    for &g in gaps {
        if g == 0 || g > tasks.len() {
            return Err(contract(format!("gap index {g} outside 1..={}", tasks.len())));
        }
        let slot = &mut tasks[g - 1];
        slot.train = TaskDataset::gap(slot.train.input_dim(), slot.train.task_id, Split::Train);
    }
    Ok(tasks)
}
