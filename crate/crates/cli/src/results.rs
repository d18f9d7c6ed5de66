//! Long-format accuracy tables and their aggregates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// One accuracy measurement: the model held after `after_task` evaluated on
/// the test split of `eval_task` (both 1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub seed: u64,
    pub after_task: usize,
    pub eval_task: usize,
    pub tag: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    pub arm: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<Failure>,
}

impl ResultTable {
    pub fn extend(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
        self.failures.extend(other.failures);
    }

    pub fn accuracy(&self, seed: u64, tag: &str, after_task: usize, eval_task: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.seed == seed && r.tag == tag && r.after_task == after_task && r.eval_task == eval_task)
            .map(|r| r.accuracy)
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.rows.iter().map(|r| r.seed).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        for f in &self.failures {
            w.write_record([f.seed.to_string(), "0".into(), "0".into(), "failed".into(), "NaN".into()])
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
    }

    /// Parses `results.csv`; `failed` rows are skipped.
    pub fn from_csv(bytes: &[u8]) -> Result<Self, CliError> {
        let mut rdr = csv::Reader::from_reader(bytes);
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<ResultRow>() {
            let row = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                CliError::Parse(format!("{RESULTS_FILE} line {line}: {e}"))
            })?;
            if row.tag == "failed" {
                continue;
            }
            if !(0.0..=1.0).contains(&row.accuracy) {
                return Err(CliError::Parse(format!("accuracy {} outside [0, 1]", row.accuracy)));
            }
            rows.push(row);
        }
        Ok(Self { rows, failures: Vec::new() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Self { n, mean, min, max, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub tag: String,
    pub after_task: usize,
    pub eval_task: usize,
    pub stats: Stats,
}

/// Across-seed statistics of the per-seed average over evaluated tasks and
/// of the accuracy on task `after_task` itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tag: String,
    pub after_task: usize,
    pub average: Stats,
    pub current: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub status: String,
    pub rows: usize,
    pub seeds: Vec<u64>,
    pub cells: Vec<Cell>,
    pub curves: Vec<CurvePoint>,
    #[serde(default)]
    pub failures: Vec<Failure>,
}

impl Summary {
    pub fn curve(&self, tag: &str, after_task: usize) -> Option<&CurvePoint> {
        self.curves.iter().find(|c| c.tag == tag && c.after_task == after_task)
    }

    pub fn cell(&self, tag: &str, after_task: usize, eval_task: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.tag == tag && c.after_task == after_task && c.eval_task == eval_task)
    }
}

/// Recomputes every aggregate from the raw rows.
pub fn summarize_table(table: &ResultTable) -> Summary {
    let mut cells: BTreeMap<(String, usize, usize), Vec<f64>> = BTreeMap::new();
    let mut per_seed: BTreeMap<(String, usize, u64), (Vec<f64>, Option<f64>)> = BTreeMap::new();
    for r in &table.rows {
        cells.entry((r.tag.clone(), r.after_task, r.eval_task)).or_default().push(r.accuracy);
        let e = per_seed.entry((r.tag.clone(), r.after_task, r.seed)).or_default();
        e.0.push(r.accuracy);
        if r.eval_task == r.after_task {
            e.1 = Some(r.accuracy);
        }
    }
    let cells = cells
        .into_iter()
        .filter_map(|((tag, after_task, eval_task), v)| Stats::of(&v).map(|stats| Cell { tag, after_task, eval_task, stats }))
        .collect();
    let mut curves: BTreeMap<(String, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((tag, after, _), (accs, current)) in per_seed {
        let e = curves.entry((tag, after)).or_default();
        e.0.push(accs.iter().sum::<f64>() / accs.len() as f64);
        if let Some(c) = current {
            e.1.push(c);
        }
    }
    let curves = curves
        .into_iter()
        .filter_map(|((tag, after_task), (avg, cur))| {
            Stats::of(&avg).map(|average| CurvePoint { tag, after_task, average, current: Stats::of(&cur) })
        })
        .collect();
    Summary {
        status: if table.rows.is_empty() { "no rows".into() } else { "ok".into() },
        rows: table.rows.len(),
        seeds: table.seeds(),
        cells,
        curves,
        failures: table.failures.clone(),
    }
}

/// Per-tag accuracy matrices and average-accuracy curves as plain text.
pub fn render_summary(s: &Summary) -> String {
    let mut out = String::new();
    if s.rows == 0 {
        out.push_str("no rows\n");
        return out;
    }
    let mut tags: Vec<&str> = s.cells.iter().map(|c| c.tag.as_str()).collect();
    tags.dedup();
    tags.sort_unstable();
    tags.dedup();
    let _ = writeln!(out, "{} rows over {} seeds", s.rows, s.seeds.len());
    for tag in tags {
        let max_eval = s.cells.iter().filter(|c| c.tag == tag).map(|c| c.eval_task).max().unwrap_or(0);
        let mut afters: Vec<usize> = s.cells.iter().filter(|c| c.tag == tag).map(|c| c.after_task).collect();
        afters.dedup();
        let _ = writeln!(out, "\n[{tag}] mean accuracy, rows = after task, columns = eval task");
        let _ = write!(out, "{:>6}", "");
        for j in 1..=max_eval {
            let _ = write!(out, "{j:>8}");
        }
        let _ = writeln!(out, "{:>10}", "average");
        for a in afters {
            let _ = write!(out, "{a:>6}");
            for j in 1..=max_eval {
                match s.cell(tag, a, j) {
                    Some(c) => {
                        let _ = write!(out, "{:>8.4}", c.stats.mean);
                    }
                    None => {
                        let _ = write!(out, "{:>8}", "-");
                    }
                }
            }
            let avg = s.curve(tag, a).map_or(f64::NAN, |c| c.average.mean);
            let _ = writeln!(out, "{avg:>10.4}");
        }
    }
    for f in &s.failures {
        let _ = writeln!(out, "failed: seed {} ({}): {}", f.seed, f.arm, f.message);
    }
    out
}

pub fn read_results(dir: &Path) -> Result<ResultTable, CliError> {
    let path = dir.join(RESULTS_FILE);
    let bytes = std::fs::read(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    ResultTable::from_csv(&bytes)
}

/// Reads `results.csv` from `dir` and recomputes its summary.
pub fn summarize(dir: &Path) -> Result<Summary, CliError> {
    Ok(summarize_table(&read_results(dir)?))
}
