//! On-disk layout of filter and smoother outputs.
//!
//! A trace directory holds `meta.json`, `noise.vecf` and, per task `t`,
//! `task_{t:03}.mean` (a `VECF` container) and `task_{t:03}.prec` (a `DPLR`
//! container).

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dplr::io::{read_dplr, read_vector, write_dplr, write_vector};
use crate::dplr::ProcessNoise;
use crate::error::{Error, Result};
use crate::lgf::{BeliefTag, FilterConfig, FilterTrace, GaussianBelief, LambdaSchedule, UpdateReport};
use crate::net::{Activation, Arch, LossKind, TrainConfig};

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    {
        let mut f = BufWriter::new(File::create(&tmp)?);
        f.write_all(bytes)?;
        f.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

fn write_with<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let tmp = tmp_path(path);
    {
        let mut f = BufWriter::new(File::create(&tmp)?);
        body(&mut f)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub loss: LossKind,
}

impl ArchSpec {
    pub fn of(arch: &Arch) -> Self {
        Self { sizes: arch.sizes().to_vec(), activation: arch.activation(), loss: arch.loss() }
    }

    pub fn build(&self) -> Result<Arch> {
        Arch::new(self.sizes.clone(), self.activation, self.loss)
    }
}

/// The serializable part of a [`FilterConfig`]; the noise lives in its own file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSnapshot {
    pub lambda: LambdaSchedule,
    pub rank: usize,
    pub initial_precision: f64,
    pub train: TrainConfig,
    pub curvature_samples: usize,
    pub chunk_size: usize,
    pub tail_to_diag: bool,
    pub seed: u64,
}

impl ConfigSnapshot {
    pub fn of(cfg: &FilterConfig) -> Self {
        Self {
            lambda: cfg.lambda,
            rank: cfg.rank,
            initial_precision: cfg.initial_precision,
            train: cfg.train.clone(),
            curvature_samples: cfg.curvature_samples,
            chunk_size: cfg.chunk_size,
            tail_to_diag: cfg.tail_to_diag,
            seed: cfg.seed,
        }
    }

    pub fn with_noise(&self, noise: ProcessNoise) -> FilterConfig {
        FilterConfig {
            lambda: self.lambda,
            rank: self.rank,
            noise,
            initial_precision: self.initial_precision,
            train: self.train.clone(),
            curvature_samples: self.curvature_samples,
            chunk_size: self.chunk_size,
            tail_to_diag: self.tail_to_diag,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMeta {
    pub arch: ArchSpec,
    pub tag: BeliefTag,
    pub tasks: usize,
    pub skipped: Vec<bool>,
    pub config: ConfigSnapshot,
    #[serde(default)]
    pub reports: Vec<UpdateReport>,
    /// Free-form caller data such as seeds and task descriptors.
    #[serde(default)]
    pub extra: serde_json::Value,
}

fn belief_paths(dir: &Path, t: usize) -> (PathBuf, PathBuf) {
    (dir.join(format!("task_{t:03}.mean")), dir.join(format!("task_{t:03}.prec")))
}

fn write_beliefs(dir: &Path, meta: &TraceMeta, noise: &ProcessNoise, beliefs: &[GaussianBelief]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, b) in beliefs.iter().enumerate() {
        let (mean, prec) = belief_paths(dir, i + 1);
        write_with(&mean, |f| write_vector(f, &b.mean))?;
        write_with(&prec, |f| write_dplr(f, &b.precision))?;
    }
    write_with(&dir.join("noise.vecf"), |f| write_vector(f, noise.as_vector()))?;
    let json = serde_json::to_vec_pretty(meta).map_err(|e| Error::Parse(e.to_string()))?;
    atomic_write(&dir.join("meta.json"), &json)
}

/// Persists a filter trace with tag `filtered`.
pub fn write_trace(dir: &Path, trace: &FilterTrace, extra: serde_json::Value) -> Result<()> {
    let meta = TraceMeta {
        arch: ArchSpec::of(&trace.arch),
        tag: BeliefTag::Filtered,
        tasks: trace.len(),
        skipped: trace.skipped.clone(),
        config: ConfigSnapshot::of(&trace.config),
        reports: trace.reports.clone(),
        extra,
    };
    write_beliefs(dir, &meta, &trace.noise, &trace.beliefs)
}

/// Persists smoothed beliefs next to the metadata of the trace they came from.
pub fn write_smoothed(dir: &Path, trace: &FilterTrace, smoothed: &[GaussianBelief], extra: serde_json::Value) -> Result<()> {
    let meta = TraceMeta {
        arch: ArchSpec::of(&trace.arch),
        tag: BeliefTag::Smoothed,
        tasks: smoothed.len(),
        skipped: trace.skipped.clone(),
        config: ConfigSnapshot::of(&trace.config),
        reports: Vec::new(),
        extra,
    };
    write_beliefs(dir, &meta, &trace.noise, smoothed)
}

pub fn read_meta(dir: &Path) -> Result<TraceMeta> {
    let raw = fs::read(dir.join("meta.json"))?;
    serde_json::from_slice(&raw).map_err(|e| Error::Parse(format!("{}: {e}", dir.join("meta.json").display())))
}

/// Loads a directory written by [`write_trace`] or [`write_smoothed`].
pub fn read_trace(dir: &Path) -> Result<(TraceMeta, FilterTrace)> {
    let meta = read_meta(dir)?;
    let arch = meta.arch.build()?;
    let q = read_vector(&mut BufReader::new(File::open(dir.join("noise.vecf"))?))?;
    let noise = ProcessNoise::new(q)?;
    let mut beliefs = Vec::with_capacity(meta.tasks);
    for t in 1..=meta.tasks {
        let (mean_path, prec_path) = belief_paths(dir, t);
        let mean = read_vector(&mut BufReader::new(File::open(&mean_path)?))?;
        let precision = read_dplr(&mut BufReader::new(File::open(&prec_path)?))?;
        if mean.len() != arch.num_params() || precision.dim() != arch.num_params() {
            return Err(Error::Parse(format!("task {t}: belief dimension does not match the architecture")));
        }
        beliefs.push(GaussianBelief { mean, precision, tag: meta.tag });
    }
    if meta.skipped.len() != meta.tasks {
        return Err(Error::Parse("skipped markers do not match the task count".into()));
    }
    let trace = FilterTrace {
        arch,
        beliefs,
        skipped: meta.skipped.clone(),
        config: meta.config.with_noise(noise.clone()),
        noise,
        reports: meta.reports.clone(),
    };
    Ok((meta, trace))
}
