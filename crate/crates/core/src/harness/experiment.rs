//! Multi-trial experiments and their on-disk layout.
//!
//! ```text
//! <out>/manifest.json
//! <out>/<method>/eta_<step>/trial_<i>.csv
//! <out>/<method>/eta_<step>/aggregate.csv
//! <out>/<method>/eta_<step>/snapshots_trial_<i>.jsonl   (snapshot_stride set)
//! ```
//!
//! Floats are written with 17 significant digits. Unless
//! `record_wall_clock` is set, the output tree is a pure function of the
//! config.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::TrialRecord;
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Method, RawConfig};
use crate::harness::run::{run_trial, Snapshot, TrialOutput};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trial_csv(record: &TrialRecord, num_objectives: usize) -> String {
    let mut s = String::from("iter,grad_norm");
    for k in 1..=num_objectives {
        let _ = write!(s, ",f_{k}");
    }
    s.push('\n');
    for p in &record.series {
        let _ = write!(s, "{},{}", p.iter, fmt_float(p.grad_norm));
        for v in &p.objectives {
            let _ = write!(s, ",{}", fmt_float(*v));
        }
        s.push('\n');
    }
    s
}

/// Per-iteration mean and sample standard deviation of GradNorm across
/// trials; only iterations logged by every trial are kept.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub iter: usize,
    pub mean: f64,
    pub std: f64,
}

pub fn aggregate(records: &[&TrialRecord]) -> Vec<AggregateRow> {
    let Some(shortest) = records.iter().min_by_key(|r| r.series.len()) else {
        return Vec::new();
    };
    let n = records.len() as f64;
    (0..shortest.series.len())
        .map(|row| {
            let vals: Vec<f64> = records.iter().map(|r| r.series[row].grad_norm).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let std = if records.len() > 1 {
                (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            AggregateRow {
                iter: shortest.series[row].iter,
                mean,
                std,
            }
        })
        .collect()
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::from("iter,grad_norm_mean,grad_norm_std\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.iter, fmt_float(r.mean), fmt_float(r.std));
    }
    s
}

#[derive(Serialize)]
struct SnapshotLine<'a> {
    iter: usize,
    positions: &'a [Vec<f64>],
}

pub fn snapshots_jsonl(snapshots: &[Snapshot]) -> String {
    let mut s = String::new();
    for snap in snapshots {
        let rows = snap.positions.to_rows();
        let line = serde_json::to_string(&SnapshotLine {
            iter: snap.iter,
            positions: &rows,
        })
        .expect("snapshot serializes");
        s.push_str(&line);
        s.push('\n');
    }
    s
}

pub fn group_dir(method: Method, step_size: f64) -> PathBuf {
    PathBuf::from(method.as_str()).join(format!("eta_{step_size}"))
}

/// One finished trial together with where it was written.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub method: Method,
    pub step_size: f64,
    pub output: TrialOutput,
    pub wall_clock_seconds: f64,
}

/// Aggregated results for one (method, step size) pair.
#[derive(Clone, Debug)]
pub struct GroupSummary {
    pub method: Method,
    pub step_size: f64,
    pub aggregate: Vec<AggregateRow>,
}

#[derive(Clone, Debug)]
pub struct ExperimentSummary {
    pub trials: Vec<TrialResult>,
    pub groups: Vec<GroupSummary>,
    pub output_dir: PathBuf,
}

impl ExperimentSummary {
    pub fn any_diverged(&self) -> bool {
        self.trials.iter().any(|t| t.output.record.diverged_at.is_some())
    }

    pub fn group(&self, method: Method, step_size: f64) -> Option<&GroupSummary> {
        self.groups
            .iter()
            .find(|g| g.method == method && g.step_size == step_size)
    }
}

#[derive(Serialize)]
struct ManifestTrial {
    method: String,
    step_size: f64,
    trial_index: u64,
    seed: u64,
    rng_stream: u64,
    file: String,
    logged_points: usize,
    final_grad_norm: Option<f64>,
    diverged_at: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_clock_seconds: Option<f64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    crate_version: &'static str,
    rng: &'static str,
    config: &'a RawConfig,
    trials: Vec<ManifestTrial>,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Fails early when `dir` cannot be created or written.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write_probe");
    fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

/// Runs every (method, step size, trial) combination and writes the output
/// tree. Trials run in parallel; results are independent of scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let out = &config.output_dir;
    ensure_writable(out)?;

    let jobs: Vec<(Method, f64, u64)> = config
        .methods
        .iter()
        .flat_map(|&m| {
            config
                .step_sizes
                .iter()
                .flat_map(move |&eta| (0..config.num_trials as u64).map(move |i| (m, eta, i)))
        })
        .collect();

    let trials: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(method, step_size, trial)| {
            let start = Instant::now();
            let output = run_trial(&config.run_config(method, step_size), trial)?;
            Ok(TrialResult {
                method,
                step_size,
                output,
                wall_clock_seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<_>>()?;

    let k = config.objectives.len();
    trials.par_iter().try_for_each(|t| {
        let dir = out.join(group_dir(t.method, t.step_size));
        let idx = t.output.record.trial_index;
        write_file(&dir.join(format!("trial_{idx}.csv")), &trial_csv(&t.output.record, k))?;
        if config.snapshot_stride.is_some() {
            write_file(
                &dir.join(format!("snapshots_trial_{idx}.jsonl")),
                &snapshots_jsonl(&t.output.snapshots),
            )?;
        }
        Ok::<_, Error>(())
    })?;

    let mut groups = Vec::new();
    for &method in &config.methods {
        for &step_size in &config.step_sizes {
            let records: Vec<&TrialRecord> = trials
                .iter()
                .filter(|t| t.method == method && t.step_size == step_size)
                .map(|t| &t.output.record)
                .collect();
            let rows = aggregate(&records);
            write_file(
                &out.join(group_dir(method, step_size)).join("aggregate.csv"),
                &aggregate_csv(&rows),
            )?;
            groups.push(GroupSummary {
                method,
                step_size,
                aggregate: rows,
            });
        }
    }

    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        crate_version: env!("CARGO_PKG_VERSION"),
        rng: "chacha8, key from seed_from_u64(seed), stream = trial index; box-muller normals",
        config: &config.raw,
        trials: trials
            .iter()
            .map(|t| {
                let r = &t.output.record;
                ManifestTrial {
                    method: t.method.to_string(),
                    step_size: t.step_size,
                    trial_index: r.trial_index,
                    seed: r.seed,
                    rng_stream: r.trial_index,
                    file: group_dir(t.method, t.step_size)
                        .join(format!("trial_{}.csv", r.trial_index))
                        .to_string_lossy()
                        .into_owned(),
                    logged_points: r.series.len(),
                    final_grad_norm: r.final_grad_norm(),
                    diverged_at: r.diverged_at,
                    wall_clock_seconds: config.record_wall_clock.then_some(t.wall_clock_seconds),
                }
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&out.join("manifest.json"), &(json + "\n"))?;

    Ok(ExperimentSummary {
        trials,
        groups,
        output_dir: out.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::SeriesPoint;
    use crate::ensemble::Matrix;

    fn record(values: &[f64]) -> TrialRecord {
        TrialRecord {
            method: "mwgrad-svgd".into(),
            step_size: 0.1,
            seed: 0,
            trial_index: 0,
            series: values
                .iter()
                .enumerate()
                .map(|(i, &g)| SeriesPoint {
                    iter: i,
                    grad_norm: g,
                    objectives: vec![1.0, 2.0],
                })
                .collect(),
            final_positions: Matrix::zeros(1, 1),
            diverged_at: None,
        }
    }

    #[test]
    fn float_format_has_seventeen_significant_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(0.0), "0.0000000000000000e0");
        let v = 1.0 / 3.0;
        assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn csv_headers() {
        let r = record(&[1.5, 0.5]);
        let csv = trial_csv(&r, 2);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("iter,grad_norm,f_1,f_2"));
        assert_eq!(lines.count(), 2);
        assert!(aggregate_csv(&[]).starts_with("iter,grad_norm_mean,grad_norm_std\n"));
    }

    #[test]
    fn single_trial_has_zero_std() {
        let r = record(&[3.0, 2.0, 1.0]);
        let rows = aggregate(&[&r]);
        assert!(rows.iter().all(|row| row.std == 0.0));
        assert_eq!(rows[1].mean, 2.0);
    }

    #[test]
    fn two_trial_mean_and_sample_std() {
        let a = record(&[1.0, 4.0]);
        let b = record(&[3.0, 8.0]);
        let rows = aggregate(&[&a, &b]);
        assert_eq!(rows[0].mean, 2.0);
        assert!((rows[0].std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(rows[1].mean, 6.0);
    }

    #[test]
    fn step_size_directory_names() {
        assert_eq!(
            group_dir(Method::AmwgradBlob, 0.001),
            PathBuf::from("amwgrad-blob/eta_0.001")
        );
        assert_eq!(
            group_dir(Method::MwgradSvgd, 0.01),
            PathBuf::from("mwgrad-svgd/eta_0.01")
        );
    }
}
