//! Datasets and continual-learning task sequences.

mod idx;
mod sequences;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

pub use idx::{encode_idx_images, encode_idx_labels, load_mnist, parse_idx_images, parse_idx_labels, IdxImages, Mnist, MNIST_FILES};
pub use sequences::{
    insert_gaps, make_brightness, make_disjoint, make_permuted, make_synthetic, subsample, SyntheticSpec,
    DEFAULT_SHIFTS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Inputs (one row per point) with integer labels.
///
/// A gap-marked set carries no points; the filter only predicts through it.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub inputs: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub task_id: usize,
    pub split: Split,
    pub gap: bool,
}

impl TaskDataset {
    pub fn new(inputs: DMatrix<f64>, labels: Vec<usize>, task_id: usize, split: Split) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(contract(format!("{} inputs but {} labels", inputs.nrows(), labels.len())));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(contract("inputs contain non-finite values"));
        }
        Ok(Self { inputs, labels, task_id, split, gap: false })
    }

    pub fn gap(input_dim: usize, task_id: usize, split: Split) -> Self {
        Self { inputs: DMatrix::zeros(0, input_dim), labels: Vec::new(), task_id, split, gap: true }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// One more than the largest label, or 0 when empty.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_rows(rows.iter()),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            task_id: self.task_id,
            split: self.split,
            gap: self.gap,
        }
    }

    /// FNV-1a over the shape, input bits and labels.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.inputs.nrows() as u64);
        eat(self.inputs.ncols() as u64);
        for v in self.inputs.iter() {
            eat(v.to_bits());
        }
        for &l in &self.labels {
            eat(l as u64);
        }
        h
    }
}

/// Train and test data of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub train: TaskDataset,
    pub test: TaskDataset,
}

impl Task {
    pub fn id(&self) -> usize {
        self.train.task_id
    }

    pub fn is_gap(&self) -> bool {
        self.train.gap
    }
}
