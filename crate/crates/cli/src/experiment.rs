//! Seeded experiment runs: task construction, filtering, smoothing,
//! baselines and evaluation.

use std::fs;
use std::path::Path;

use log::{error, info};
use lrlgf_core::lgf::{run_filter, FilterTrace, GaussianBelief};
use lrlgf_core::net::{forward, init_params, train_task, Arch, MlpParams, Regularizer};
use lrlgf_core::rng::{derive_seed, stream};
use lrlgf_core::rts::run_smoother;
use lrlgf_core::tasks::{
    insert_gaps, load_mnist, make_brightness, make_disjoint, make_permuted, make_synthetic, subsample, Mnist, Task,
    TaskDataset,
};
use lrlgf_core::trace::{atomic_write, write_smoothed, write_trace};
use serde_json::json;

use crate::config::{ExperimentConfig, Mode, TaskSpec};
use crate::results::{summarize_table, Failure, ResultRow, ResultTable, RESULTS_FILE, SUMMARY_FILE};
use crate::CliError;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut top = f64::NEG_INFINITY;
    for (i, v) in row.enumerate() {
        if v > top {
            top = v;
            best = i;
        }
    }
    best
}

/// Fraction of points whose argmax prediction equals the label.
pub fn eval(p: &MlpParams, data: &TaskDataset) -> Result<f64, lrlgf_core::Error> {
    if data.is_empty() {
        return Err(lrlgf_core::Error::Contract("cannot evaluate on an empty dataset".into()));
    }
    let logits = forward(p, &data.inputs)?;
    let hits = logits
        .row_iter()
        .zip(&data.labels)
        .filter(|(row, &y)| argmax(row.iter().copied()) == y)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

/// Loads MNIST once when the task family needs it.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Option<Mnist>, CliError> {
    if !cfg.tasks.uses_mnist() {
        return Ok(None);
    }
    let dir = cfg.resolve_data_dir();
    load_mnist(&dir).map(Some).map_err(|e| CliError::Config(format!("MNIST at {}: {e}", dir.display())))
}

/// The task sequence for one seed, with gap slots emptied.
pub fn build_tasks(cfg: &ExperimentConfig, mnist: Option<&Mnist>, seed: u64) -> Result<Vec<Task>, CliError> {
    let need = || mnist.ok_or_else(|| CliError::Config("task family needs MNIST data".into()));
    let test_of = |m: &Mnist, points: Option<usize>| subsample(&m.test, points, derive_seed(seed, stream::SUBSAMPLE + 100));
    let tasks = match &cfg.tasks {
        TaskSpec::Permuted { tasks, train_points, test_points } => {
            let m = need()?;
            make_permuted(&m.train, &test_of(m, *test_points), *tasks, seed, *train_points)?
        }
        TaskSpec::Disjoint { train_points, test_points } => {
            let m = need()?;
            make_disjoint(&m.train, &test_of(m, *test_points), seed, *train_points)
        }
        TaskSpec::Brightness { shifts, mean, std, train_points, test_points } => {
            let m = need()?;
            make_brightness(&m.train, &test_of(m, *test_points), shifts, *mean, *std, seed, *train_points)?
        }
        TaskSpec::Synthetic(spec) => make_synthetic(spec, seed)?,
    };
    Ok(insert_gaps(tasks, &cfg.gaps)?)
}

/// Filtered rows (after task `t`, tasks `1..=t`).
fn filtered_rows(arch: &Arch, trace: &FilterTrace, tasks: &[Task], seed: u64, tag: &str) -> Result<Vec<ResultRow>, CliError> {
    let mut rows = Vec::new();
    for (i, b) in trace.beliefs.iter().enumerate() {
        let p = MlpParams::new(arch.clone(), b.mean.clone())?;
        for (j, task) in tasks.iter().enumerate().take(i + 1) {
            rows.push(ResultRow { seed, after_task: i + 1, eval_task: j + 1, tag: tag.into(), accuracy: eval(&p, &task.test)? });
        }
    }
    Ok(rows)
}

/// Smoothed rows: belief `j` of the final pass on task `j`.
fn smoothed_rows(arch: &Arch, smoothed: &[GaussianBelief], tasks: &[Task], seed: u64) -> Result<Vec<ResultRow>, CliError> {
    let last = smoothed.len();
    smoothed
        .iter()
        .zip(tasks)
        .enumerate()
        .map(|(j, (b, task))| {
            let p = MlpParams::new(arch.clone(), b.mean.clone())?;
            Ok(ResultRow { seed, after_task: last, eval_task: j + 1, tag: "smoothed".into(), accuracy: eval(&p, &task.test)? })
        })
        .collect()
}

/// Output of the filter arm for one seed.
pub struct LgfRun {
    pub rows: Vec<ResultRow>,
    pub trace: FilterTrace,
    pub smoothed: Option<Vec<GaussianBelief>>,
}

pub fn run_lgf_seed(cfg: &ExperimentConfig, arch: &Arch, tasks: &[Task], seed: u64) -> Result<LgfRun, CliError> {
    let filter = cfg.filter_config(arch, seed)?;
    let train: Vec<&TaskDataset> = tasks.iter().map(|t| &t.train).collect();
    let trace = run_filter(arch, &train, &filter)?;
    let mut rows = filtered_rows(arch, &trace, tasks, seed, "filtered")?;
    let smoothed = if cfg.mode == Mode::Filter {
        None
    } else {
        let s = run_smoother(&trace, cfg.smoother_rank(&filter))?;
        rows.extend(smoothed_rows(arch, &s, tasks, seed)?);
        Some(s)
    };
    Ok(LgfRun { rows, trace, smoothed })
}

/// Unregularized sequential training continuing from the previous task's
/// weights, with the same initialization and shuffles as the filter arm.
pub fn run_baseline_seed(cfg: &ExperimentConfig, arch: &Arch, tasks: &[Task], seed: u64) -> Result<Vec<ResultRow>, CliError> {
    let filter = cfg.filter_config(arch, seed)?;
    let mut p = init_params(arch, seed);
    let mut rows = Vec::new();
    for (i, task) in tasks.iter().enumerate() {
        let t = i + 1;
        if !task.is_gap() {
            p = train_task::<Regularizer>(&p, &task.train.inputs, &task.train.labels, None, &filter.train_for(t))?;
        }
        for (j, seen) in tasks.iter().enumerate().take(t) {
            rows.push(ResultRow { seed, after_task: t, eval_task: j + 1, tag: "baseline".into(), accuracy: eval(&p, &seen.test)? });
        }
    }
    Ok(rows)
}

fn persist(cfg: &ExperimentConfig, run: &LgfRun, seed: u64) -> Result<(), CliError> {
    let dir = cfg.output.join("traces").join(format!("seed_{seed}"));
    let extra = json!({ "seed": seed, "tasks": cfg.tasks, "gaps": cfg.gaps });
    write_trace(&dir.join("filtered"), &run.trace, extra.clone())?;
    if let Some(s) = &run.smoothed {
        write_smoothed(&dir.join("smoothed"), &run.trace, s, extra)?;
    }
    Ok(())
}

/// Runs every seed; a failing seed is recorded and the others continue.
pub fn run_arms(cfg: &ExperimentConfig, with_baseline: bool) -> Result<ResultTable, CliError> {
    let arch = cfg.arch()?;
    let mnist = load_data(cfg)?;
    let mut table = ResultTable::default();
    for &seed in &cfg.seeds {
        let tasks = build_tasks(cfg, mnist.as_ref(), seed)?;
        match run_lgf_seed(cfg, &arch, &tasks, seed) {
            Ok(run) => {
                if cfg.save_traces {
                    persist(cfg, &run, seed)?;
                }
                table.rows.extend(run.rows);
            }
            Err(e) => {
                error!("seed {seed}: filter arm failed: {e}");
                table.failures.push(Failure { seed, arm: "lgf".into(), message: e.to_string() });
            }
        }
        if with_baseline {
            match run_baseline_seed(cfg, &arch, &tasks, seed) {
                Ok(rows) => table.rows.extend(rows),
                Err(e) => {
                    error!("seed {seed}: baseline arm failed: {e}");
                    table.failures.push(Failure { seed, arm: "baseline".into(), message: e.to_string() });
                }
            }
        }
        info!("seed {seed} done");
    }
    Ok(table)
}

/// Writes `results.csv` and `summary.json` into `dir`, each atomically.
pub fn write_outputs(dir: &Path, table: &ResultTable) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    atomic_write(&dir.join(RESULTS_FILE), &table.to_csv()?)?;
    let summary = serde_json::to_vec_pretty(&summarize_table(table)).map_err(|e| CliError::Runtime(e.to_string()))?;
    atomic_write(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, CliError> {
    let table = run_arms(cfg, false)?;
    write_outputs(&cfg.output, &table)?;
    Ok(table)
}

/// The filter arm and the no-regularizer baseline on identical task data.
pub fn compare_regularizers(cfg: &ExperimentConfig) -> Result<ResultTable, CliError> {
    let table = run_arms(cfg, true)?;
    write_outputs(&cfg.output, &table)?;
    Ok(table)
}
