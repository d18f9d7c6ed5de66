//! Experiment configuration files (JSON, unknown keys rejected).

use std::fs;
use std::path::{Path, PathBuf};

use lrlgf_core::dplr::ProcessNoise;
use lrlgf_core::lgf::{FilterConfig, LambdaSchedule};
use lrlgf_core::net::{Activation, Arch, LossKind, TrainConfig};
use lrlgf_core::tasks::{SyntheticSpec, DEFAULT_SHIFTS};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable overriding the MNIST directory.
pub const DATA_DIR_ENV: &str = "LRLGF_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TaskSpec {
    Permuted {
        tasks: usize,
        #[serde(default)]
        train_points: Option<usize>,
        #[serde(default)]
        test_points: Option<usize>,
    },
    Disjoint {
        #[serde(default)]
        train_points: Option<usize>,
        #[serde(default)]
        test_points: Option<usize>,
    },
    Brightness {
        #[serde(default = "default_shifts")]
        shifts: Vec<f64>,
        #[serde(default = "half")]
        mean: f64,
        #[serde(default = "half")]
        std: f64,
        #[serde(default)]
        train_points: Option<usize>,
        #[serde(default)]
        test_points: Option<usize>,
    },
    Synthetic(SyntheticSpec),
}

fn default_shifts() -> Vec<f64> {
    DEFAULT_SHIFTS.to_vec()
}

fn half() -> f64 {
    0.5
}

impl TaskSpec {
    pub fn num_tasks(&self) -> usize {
        match self {
            TaskSpec::Permuted { tasks, .. } => *tasks,
            TaskSpec::Disjoint { .. } => 2,
            TaskSpec::Brightness { shifts, .. } => shifts.len(),
            TaskSpec::Synthetic(s) => s.tasks,
        }
    }

    pub fn uses_mnist(&self) -> bool {
        !matches!(self, TaskSpec::Synthetic(_))
    }

    /// Input width and class count of the task family.
    pub fn io_dims(&self) -> (usize, usize) {
        match self {
            TaskSpec::Synthetic(s) => (2, s.classes),
            _ => (784, 10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
}

fn default_activation() -> Activation {
    Activation::Tanh
}

fn default_loss() -> LossKind {
    LossKind::CrossEntropy
}

/// Which parameter kinds of the selected layers a noise term touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ParamPart {
    #[default]
    All,
    Weights,
    Biases,
}

/// `value` on the chosen parts of the listed 0-based layers (all layers
/// when `layers` is omitted). Later terms overwrite earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseTerm {
    #[serde(default)]
    pub layers: Option<Vec<usize>>,
    #[serde(default)]
    pub part: ParamPart,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub lambda: LambdaSchedule,
    /// Defaults to `10·C`.
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default)]
    pub noise: Vec<NoiseTerm>,
    #[serde(default = "default_initial_precision")]
    pub initial_precision: f64,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_curvature_samples")]
    pub curvature_samples: usize,
    #[serde(default = "default_chunk")]
    pub chunk_size: usize,
    #[serde(default)]
    pub tail_to_diag: bool,
    /// Defaults to the filter rank.
    #[serde(default)]
    pub smoother_rank: Option<usize>,
}

fn default_initial_precision() -> f64 {
    1e-4
}

fn default_curvature_samples() -> usize {
    100
}

fn default_chunk() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Filter,
    FilterSmooth,
    Gaps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tasks: TaskSpec,
    /// 1-based task slots left unobserved (used by `gaps` mode).
    #[serde(default)]
    pub gaps: Vec<usize>,
    pub arch: ArchConfig,
    pub filter: FilterSpec,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub save_traces: bool,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("at least one seed is required".into()));
        }
        let t = self.tasks.num_tasks();
        if t == 0 {
            return Err(CliError::Config("the task sequence is empty".into()));
        }
        if let Some(&g) = self.gaps.iter().find(|&&g| g == 0 || g > t) {
            return Err(CliError::Config(format!("gap {g} outside 1..={t}")));
        }
        if self.mode == Mode::Gaps && self.gaps.is_empty() {
            return Err(CliError::Config("mode \"gaps\" needs a non-empty gap list".into()));
        }
        let arch = self.arch()?;
        self.filter_config(&arch, 0)?.validate(&arch, t).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn arch(&self) -> Result<Arch, CliError> {
        let (input, classes) = self.tasks.io_dims();
        let mut sizes = vec![input];
        sizes.extend(&self.arch.hidden);
        sizes.push(classes);
        Arch::new(sizes, self.arch.activation, self.arch.loss).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn filter_config(&self, arch: &Arch, seed: u64) -> Result<FilterConfig, CliError> {
        let f = &self.filter;
        Ok(FilterConfig {
            lambda: f.lambda,
            rank: f.rank.unwrap_or(10 * arch.output_dim()),
            noise: compile_noise(arch, &f.noise)?,
            initial_precision: f.initial_precision,
            train: f.train.clone(),
            curvature_samples: f.curvature_samples,
            chunk_size: f.chunk_size,
            tail_to_diag: f.tail_to_diag,
            seed,
        })
    }

    pub fn smoother_rank(&self, filter: &FilterConfig) -> usize {
        self.filter.smoother_rank.unwrap_or(filter.rank)
    }

    /// `data_dir` from the config, overridden by [`DATA_DIR_ENV`], else `data/mnist`.
    pub fn resolve_data_dir(&self) -> PathBuf {
        std::env::var_os(DATA_DIR_ENV)
            .map(PathBuf::from)
            .or_else(|| self.data_dir.clone())
            .unwrap_or_else(|| PathBuf::from("data/mnist"))
    }
}

/// Per-parameter noise from layer selectors, via the flat layout.
pub fn compile_noise(arch: &Arch, terms: &[NoiseTerm]) -> Result<ProcessNoise, CliError> {
    let mut q = vec![0.0; arch.num_params()];
    let layers = arch.layers();
    for term in terms {
        if !(term.value >= 0.0) || !term.value.is_finite() {
            return Err(CliError::Config(format!("noise value {} must be finite and non-negative", term.value)));
        }
        let picked: Vec<usize> = match &term.layers {
            None => (0..layers.len()).collect(),
            Some(list) => list.clone(),
        };
        for l in picked {
            let slot = layers
                .get(l)
                .ok_or_else(|| CliError::Config(format!("noise layer {l} outside 0..{}", layers.len())))?;
            let weights = slot.weight_offset..slot.bias_offset;
            let biases = slot.bias_offset..slot.bias_offset + slot.fan_out;
            let ranges = match term.part {
                ParamPart::All => vec![weights, biases],
                ParamPart::Weights => vec![weights],
                ParamPart::Biases => vec![biases],
            };
            for r in ranges {
                q[r].iter_mut().for_each(|v| *v = term.value);
            }
        }
    }
    ProcessNoise::new(q.into()).map_err(|e| CliError::Config(e.to_string()))
}
