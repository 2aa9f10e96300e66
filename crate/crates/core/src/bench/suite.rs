use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EnvironmentSpec, FileConfig};
use crate::error::{Error, Result};
use crate::model::{SolverConfig, Variant};
use crate::world::{derived_seed, generate_forest, load_environment, DensityTier, Environment};

use super::{export_plot, export_trajectory, run_trial, TrialResult, TrialSettings};

/// Outcome string used for trials that panicked or returned an error.
pub const ERROR_OUTCOME: &str = "error";

/// A command is anomalous when it exceeds this multiple of `‖u_max‖`.
pub const ANOMALY_FACTOR: f64 = 1.5;

/// One trial of a suite, as stored in `trials.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub variant: Variant,
    pub samples: usize,
    pub environment: String,
    pub trial: usize,
    pub env_seed: u64,
    pub solver_seed: u64,
    /// `reached`, `collided`, `stuck`, `timeout`, or `error`.
    pub outcome: String,
    pub steps: usize,
    pub flight_time: f64,
    pub avg_speed: f64,
    pub path_length: f64,
    pub smoothness: Option<f64>,
    pub solve_rate: f64,
    pub max_command_norm: f64,
    pub anomalous: bool,
    pub message: String,
}

impl TrialRecord {
    pub fn reached(&self) -> bool {
        self.outcome == "reached"
    }

    pub fn is_error(&self) -> bool {
        self.outcome == ERROR_OUTCOME
    }
}

/// Aggregates of one (variant, sample count, environment) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub variant: Variant,
    pub samples: usize,
    pub environment: String,
    pub trials: usize,
    pub reached: usize,
    pub errors: usize,
    /// Percent of trials that reached the goal, in [0, 100].
    pub success_rate: f64,
    /// Over successful trials only.
    pub mean_flight_time: Option<f64>,
    /// Over successful trials only.
    pub mean_avg_speed: Option<f64>,
    /// Over every trial long enough to have a smoothness value.
    pub mean_smoothness: Option<f64>,
    /// Wall-clock solves per second over trials that executed a step.
    pub mean_solve_rate: Option<f64>,
    pub anomalous: usize,
}

impl CellSummary {
    fn same_values(&self, other: &Self) -> bool {
        let a = Self {
            mean_solve_rate: None,
            ..self.clone()
        };
        let b = Self {
            mean_solve_rate: None,
            ..other.clone()
        };
        a == b
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn summarize(records: &[&TrialRecord]) -> CellSummary {
    let first = records[0];
    let trials = records.len();
    let reached: Vec<_> = records.iter().filter(|r| r.reached()).collect();
    let valid = || records.iter().filter(|r| !r.is_error());
    CellSummary {
        variant: first.variant,
        samples: first.samples,
        environment: first.environment.clone(),
        trials,
        reached: reached.len(),
        errors: records.iter().filter(|r| r.is_error()).count(),
        success_rate: 100.0 * reached.len() as f64 / trials as f64,
        mean_flight_time: mean(reached.iter().map(|r| r.flight_time)),
        mean_avg_speed: mean(reached.iter().map(|r| r.avg_speed)),
        mean_smoothness: mean(valid().filter_map(|r| r.smoothness)),
        mean_solve_rate: mean(valid().filter(|r| r.steps > 0).map(|r| r.solve_rate)),
        anomalous: records.iter().filter(|r| r.anomalous).count(),
    }
}

/// Per-cell aggregates, in the order cells first appear in the records.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub cells: Vec<CellSummary>,
}

impl SuiteReport {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let mut keys: Vec<(Variant, usize, &str)> = Vec::new();
        for r in records {
            let key = (r.variant, r.samples, r.environment.as_str());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        let cells = keys
            .into_iter()
            .map(|(v, k, e)| {
                let group: Vec<&TrialRecord> = records
                    .iter()
                    .filter(|r| r.variant == v && r.samples == k && r.environment == e)
                    .collect();
                summarize(&group)
            })
            .collect();
        Self { cells }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// First cell for this variant and environment.
    pub fn cell(&self, variant: Variant, environment: &str) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.variant == variant && c.environment == environment)
    }

    /// Equality of everything except wall-clock solve rates.
    pub fn same_values(&self, other: &Self) -> bool {
        self.cells.len() == other.cells.len()
            && self.cells.iter().zip(&other.cells).all(|(a, b)| a.same_values(b))
    }

    fn environments(&self) -> Vec<&str> {
        let mut envs: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !envs.contains(&c.environment.as_str()) {
                envs.push(&c.environment);
            }
        }
        envs
    }
}

fn opt(v: Option<f64>, precision: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.precision$}"))
}

/// Aligned text with one block per environment and one row per method.
pub fn format_report(report: &SuiteReport) -> String {
    let mut s = String::new();
    if report.is_empty() {
        s.push_str("(empty suite)\n");
        return s;
    }
    for env in report.environments() {
        let _ = writeln!(s, "Environment {env}");
        let _ = writeln!(
            s,
            "{:<26} {:>5} {:>7} {:>8} {:>9} {:>11} {:>10} {:>6} {:>6}",
            "Method", "K", "SR [%]", "FT [s]", "AS [m/s]", "Smoothness", "Rate [Hz]", "Anom.", "Err."
        );
        for c in report.cells.iter().filter(|c| c.environment == env) {
            let _ = writeln!(
                s,
                "{:<26} {:>5} {:>7.0} {:>8} {:>9} {:>11} {:>10} {:>6} {:>6}",
                c.variant.label(),
                c.samples,
                c.success_rate,
                opt(c.mean_flight_time, 1),
                opt(c.mean_avg_speed, 3),
                opt(c.mean_smoothness, 5),
                opt(c.mean_solve_rate, 1),
                c.anomalous,
                c.errors
            );
        }
        s.push('\n');
    }
    s
}

pub fn write_records(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|rec| rec.map_err(Error::from)).collect()
}

pub fn write_summary_csv(path: &Path, report: &SuiteReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in &report.cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

/// Where and what to write while running a suite.
#[derive(Clone, Debug, Default)]
pub struct SuiteOptions {
    /// Directory for `trials.csv`, `summary.csv`, `report.txt` and per-trial
    /// trajectories. Nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    pub export_plots: bool,
    pub capture_candidates: bool,
}

#[derive(Clone, Debug)]
pub struct SuiteRun {
    pub records: Vec<TrialRecord>,
    pub report: SuiteReport,
}

enum EnvSource {
    Forest(crate::world::ForestSpec),
    Fixed(Environment),
}

struct Column {
    name: String,
    source: EnvSource,
}

fn resolve_environment(file: &FileConfig, spec: &EnvironmentSpec, base_dir: &Path) -> Result<Column> {
    let bad = |m: String| Error::InvalidConfig { violations: vec![m] };
    match (&spec.density, &spec.file) {
        (Some(d), None) => {
            let forest = match d.parse::<DensityTier>() {
                Ok(tier) => file.forest(tier),
                Err(_) => {
                    let density: f64 = d
                        .parse()
                        .map_err(|_| bad(format!("environment density `{d}` is neither a tier nor a number")))?;
                    if !(density.is_finite() && density >= 0.0) {
                        return Err(bad(format!("environment density {density} must be non-negative")));
                    }
                    crate::world::ForestSpec {
                        density,
                        ..file.forest(DensityTier::Low)
                    }
                }
            };
            Ok(Column {
                name: d.clone(),
                source: EnvSource::Forest(forest),
            })
        }
        (None, Some(p)) => {
            let path = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
            let env = load_environment(&path)?;
            env.validate(file.robot_radius)?;
            let name = path
                .file_stem()
                .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
            Ok(Column {
                name,
                source: EnvSource::Fixed(env),
            })
        }
        _ => Err(bad("each environment needs exactly one of `density` or `file`".into())),
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "trial panicked".to_string())
}

fn record_of(
    variant: Variant,
    cfg: &SolverConfig,
    environment: &str,
    trial: usize,
    seeds: (u64, u64),
    outcome: std::result::Result<&TrialResult, String>,
) -> TrialRecord {
    let base = TrialRecord {
        variant,
        samples: cfg.samples,
        environment: environment.to_string(),
        trial,
        env_seed: seeds.0,
        solver_seed: seeds.1,
        outcome: ERROR_OUTCOME.to_string(),
        steps: 0,
        flight_time: 0.0,
        avg_speed: 0.0,
        path_length: 0.0,
        smoothness: None,
        solve_rate: 0.0,
        max_command_norm: 0.0,
        anomalous: false,
        message: String::new(),
    };
    match outcome {
        Ok(r) => TrialRecord {
            outcome: r.outcome.to_string(),
            steps: r.steps(),
            flight_time: r.flight_time,
            avg_speed: r.avg_speed,
            path_length: r.path_length,
            smoothness: r.smoothness,
            solve_rate: r.solve_rate,
            max_command_norm: r.max_command_norm,
            anomalous: r.max_command_norm > ANOMALY_FACTOR * cfg.u_max_norm(),
            ..base
        },
        Err(message) => TrialRecord { message, ..base },
    }
}

struct Job<'a> {
    variant: Variant,
    cfg: &'a SolverConfig,
    column: &'a Column,
    trial: usize,
    env_seed: u64,
    solver_seed: u64,
}

/// Runs every variant × environment × trial cell of a loaded config. Trials
/// run in parallel; records come back in job order so reports are
/// reproducible. A trial that errors or panics is recorded with outcome
/// `error` and the suite carries on.
pub fn run_suite_config(file: &FileConfig, base_dir: &Path, options: &SuiteOptions) -> Result<SuiteRun> {
    let variants = file.variant_specs();
    let configs: Vec<(Variant, SolverConfig)> = variants
        .iter()
        .map(|v| file.solver_for(v).map(|c| (v.variant, c)))
        .collect::<Result<_>>()?;
    let columns: Vec<Column> = file
        .environment_specs()
        .iter()
        .map(|e| resolve_environment(file, e, base_dir))
        .collect::<Result<_>>()?;

    let mut settings: TrialSettings = file.trial_settings();
    settings.capture_candidates = options.capture_candidates;

    let mut jobs = Vec::new();
    for (variant, cfg) in &configs {
        for (e, column) in columns.iter().enumerate() {
            for trial in 0..file.trials {
                // Environment and solver seeds depend on the column and trial
                // only, so every variant faces the same forests.
                let env_seed = derived_seed(derived_seed(file.seed, e as u64), trial as u64);
                jobs.push(Job {
                    variant: *variant,
                    cfg,
                    column,
                    trial,
                    env_seed,
                    solver_seed: derived_seed(env_seed, 1),
                });
            }
        }
    }

    if let Some(dir) = &options.out_dir {
        std::fs::create_dir_all(dir.join("trajectories"))?;
        if options.export_plots {
            std::fs::create_dir_all(dir.join("plots"))?;
        }
    }

    let records = jobs
        .par_iter()
        .map(|job| -> Result<TrialRecord> {
            let env = match &job.column.source {
                EnvSource::Fixed(env) => Ok(env.clone()),
                EnvSource::Forest(spec) => generate_forest(spec, job.env_seed),
            };
            let ran = env.and_then(|env| {
                catch_unwind(AssertUnwindSafe(|| run_trial(&env, job.cfg, &settings, job.solver_seed)))
                    .unwrap_or_else(|p| Err(Error::InvalidArgs(format!("panic: {}", panic_message(p)))))
                    .map(|r| (env, r))
            });
            let seeds = (job.env_seed, job.solver_seed);
            let record = match &ran {
                Ok((_, r)) => record_of(job.variant, job.cfg, &job.column.name, job.trial, seeds, Ok(r)),
                Err(e) => record_of(job.variant, job.cfg, &job.column.name, job.trial, seeds, Err(e.to_string())),
            };
            if let (Some(dir), Ok((env, r))) = (&options.out_dir, &ran) {
                let stem = format!(
                    "{}_k{}_{}_{:03}",
                    job.variant.as_str(),
                    job.cfg.samples,
                    job.column.name,
                    job.trial
                );
                export_trajectory(r, &dir.join("trajectories").join(format!("{stem}.csv")))?;
                if options.export_plots {
                    export_plot(env, Some(r), &dir.join("plots").join(format!("{stem}.svg")))?;
                }
            }
            Ok(record)
        })
        .collect::<Result<Vec<_>>>()?;

    let report = SuiteReport::from_records(&records);
    if let Some(dir) = &options.out_dir {
        write_outputs(dir, &records, &report)?;
    }
    Ok(SuiteRun { records, report })
}

/// Writes `trials.csv`, `summary.csv` and `report.txt` into `dir`.
pub fn write_outputs(dir: &Path, records: &[TrialRecord], report: &SuiteReport) -> Result<()> {
    write_records(&dir.join("trials.csv"), records)?;
    write_summary_csv(&dir.join("summary.csv"), report)?;
    std::fs::write(dir.join("report.txt"), format_report(report))?;
    Ok(())
}

/// Loads a suite config file and runs it without writing artifacts.
/// Relative environment paths resolve against the config's directory.
pub fn run_suite(path: &Path) -> Result<SuiteReport> {
    let file = FileConfig::load(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(run_suite_config(&file, base, &SuiteOptions::default())?.report)
}
