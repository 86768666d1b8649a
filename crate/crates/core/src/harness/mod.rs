//! Experiment runner: every (world, metric, trial) cell, with per-trial
//! JSON, an aggregate CSV, a summary table and coverage curves.
//!
//! Output layout under the chosen directory:
//!
//! ```text
//! results.csv            one row per trial
//! summary.csv            mean/std cost and completion rate per (world, metric)
//! trials/<world>_<metric>_<trial>.json
//! curves/<world>.csv     mean coverage per metric on a common cost grid
//! curves/<world>.svg
//! ```

mod config;
mod curves;

pub use config::{effective_threads, ConfigError, ExperimentConfig, PredictorSpec, WorldSpec};
pub use curves::{mean_curve, render_curves, step_value, CurveSet};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::information::Metric;
use crate::par;
use crate::planning::{run_exploration, ExplorationConfig, TrialResult};
use crate::prediction::{BridgeClient, InpaintingPredictor, Predictor};
use crate::seed::{derive_seed, hash_str};
use crate::world::{generate_world, load_world, WorldGrid};

/// Contents of `trials/<world>_<metric>_<trial>.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialRecord {
    pub world: String,
    pub metric: Metric,
    pub trial: usize,
    pub seed: u64,
    pub config: ExplorationConfig,
    /// `None` when the trial failed; see `error`.
    pub result: Option<TrialResult>,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn file_name(world: &str, metric: Metric, trial: usize) -> String {
        format!("{world}_{metric}_{trial}.json")
    }

    pub fn terminated(&self) -> &'static str {
        self.result.as_ref().map_or("error", |r| r.terminated.name())
    }

    pub fn csv_row(&self) -> String {
        match &self.result {
            Some(r) => format!(
                "{},{},{},{},{},{},{}",
                self.world,
                self.metric,
                self.seed,
                r.total_path_length,
                r.steps,
                r.terminated.name(),
                r.final_coverage()
            ),
            None => format!("{},{},{},,,error,", self.world, self.metric, self.seed),
        }
    }
}

pub const RESULTS_HEADER: &str = "world,metric,seed,cost,steps,terminated,coverage_final";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryCell {
    pub world: String,
    pub metric: Metric,
    /// Trials that produced a result.
    pub trials: usize,
    pub failed: usize,
    pub completed: usize,
    pub mean_cost: f64,
    /// Sample standard deviation; 0 for a single trial.
    pub std_cost: f64,
    pub completion_rate: f64,
    /// False when the cell has fewer results than configured trials.
    pub full: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SummaryTable {
    pub cells: Vec<SummaryCell>,
}

impl SummaryTable {
    /// Aggregates records grouped by (world, metric) in first-seen order.
    /// Cost is the path length at termination of every trial that produced
    /// a result.
    pub fn from_records(records: &[TrialRecord], trials_per_cell: usize) -> Self {
        let mut keys: Vec<(String, Metric)> = Vec::new();
        for r in records {
            if !keys.iter().any(|k| k.0 == r.world && k.1 == r.metric) {
                keys.push((r.world.clone(), r.metric));
            }
        }
        let cells = keys
            .into_iter()
            .map(|(world, metric)| {
                let group: Vec<&TrialRecord> = records
                    .iter()
                    .filter(|r| r.world == world && r.metric == metric)
                    .collect();
                let costs: Vec<f64> = group
                    .iter()
                    .filter_map(|r| r.result.as_ref().map(|t| t.total_path_length))
                    .collect();
                let completed = group.iter().filter(|r| r.terminated() == "complete").count();
                let (mean, std) = mean_std(&costs);
                SummaryCell {
                    world,
                    metric,
                    trials: costs.len(),
                    failed: group.len() - costs.len(),
                    completed,
                    mean_cost: mean,
                    std_cost: std,
                    completion_rate: completed as f64 / group.len().max(1) as f64,
                    full: costs.len() == trials_per_cell,
                }
            })
            .collect();
        Self { cells }
    }

    pub fn get(&self, world: &str, metric: Metric) -> Option<&SummaryCell> {
        self.cells.iter().find(|c| c.world == world && c.metric == metric)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("world,metric,trials,failed,completed,mean_cost,std_cost,completion_rate,full\n");
        for c in &self.cells {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                c.world, c.metric, c.trials, c.failed, c.completed, c.mean_cost, c.std_cost, c.completion_rate, c.full
            )
            .unwrap();
        }
        s
    }

    /// Fixed-width table for terminals.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<12} {:<7} {:>6} {:>10} {:>9} {:>9}\n",
            "world", "metric", "trials", "mean_cost", "std", "complete"
        );
        for c in &self.cells {
            writeln!(
                s,
                "{:<12} {:<7} {:>6} {:>10.2} {:>9.2} {:>8.0}%{}",
                c.world,
                c.metric.name(),
                c.trials,
                c.mean_cost,
                c.std_cost,
                100.0 * c.completion_rate,
                if c.full { "" } else { "  (incomplete)" }
            )
            .unwrap();
        }
        s
    }
}

/// Mean and sample standard deviation (0 below two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// `mean(PIm) <= mean(other)` per world, for each `other` present.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankingCheck {
    pub world: String,
    pub other: Metric,
    pub pim_mean: f64,
    pub other_mean: f64,
    pub holds: bool,
}

pub fn ranking_checks(table: &SummaryTable, others: &[Metric]) -> Vec<RankingCheck> {
    let mut out = Vec::new();
    let mut worlds: Vec<&str> = Vec::new();
    for c in &table.cells {
        if !worlds.contains(&c.world.as_str()) {
            worlds.push(&c.world);
        }
    }
    for w in worlds {
        let Some(pim) = table.get(w, Metric::PIm) else { continue };
        for &o in others {
            if let Some(oc) = table.get(w, o) {
                out.push(RankingCheck {
                    world: w.to_string(),
                    other: o,
                    pim_mean: pim.mean_cost,
                    other_mean: oc.mean_cost,
                    holds: pim.mean_cost <= oc.mean_cost,
                });
            }
        }
    }
    out
}

pub fn load_worlds(config: &ExperimentConfig) -> Result<Vec<(String, WorldGrid)>> {
    config
        .worlds
        .iter()
        .map(|w| {
            let grid = match w {
                WorldSpec::Generated(seed) => generate_world(*seed, &config.world_gen)?,
                WorldSpec::File(p) => load_world(p)?,
            };
            Ok((w.label(), grid))
        })
        .collect()
}

/// Seed of one trial: distinct per (world, metric, trial).
pub fn trial_seed(base_seed: u64, world: usize, metric: Metric, trial: usize) -> u64 {
    derive_seed(&[base_seed, world as u64, hash_str(metric.name()), trial as u64])
}

/// Seed of the start pose: shared by every metric so they start alike.
pub fn start_seed(base_seed: u64, world: usize, trial: usize) -> u64 {
    derive_seed(&[base_seed, world as u64, trial as u64, hash_str("start")])
}

pub fn build_predictor(config: &ExperimentConfig) -> Result<Box<dyn Predictor>> {
    Ok(match &config.predictor {
        PredictorSpec::Inpaint => Box::new(InpaintingPredictor {
            p_wall: config.p_wall,
            ..Default::default()
        }),
        PredictorSpec::Bridge(cmd) => Box::new(BridgeClient::spawn(cmd)?),
    })
}

/// Runs every cell in memory. Results come back in (world, metric, trial)
/// order whatever the worker count.
pub fn run_trials(
    config: &ExperimentConfig,
    worlds: &[(String, WorldGrid)],
    predictor: &dyn Predictor,
) -> Vec<TrialRecord> {
    let mut jobs = Vec::new();
    for (wi, _) in worlds.iter().enumerate() {
        for &metric in &config.metrics {
            for trial in 0..config.trials_per_cell {
                jobs.push((wi, metric, trial));
            }
        }
    }
    let exec = config.exploration.exec;
    par::with_threads(effective_threads(config.threads), || {
        par::map(exec, &jobs, |&(wi, metric, trial)| {
            let (label, world) = &worlds[wi];
            let seed = trial_seed(config.base_seed, wi, metric, trial);
            let start = crate::planning::pick_start(world, start_seed(config.base_seed, wi, trial));
            let tc = ExplorationConfig {
                metric,
                seed,
                start: Some(start),
                ..config.exploration.clone()
            };
            let outcome = run_exploration(world, &tc, predictor);
            if let Err(e) = &outcome {
                log::error!("{label} {metric} trial {trial}: {e}");
            }
            TrialRecord {
                world: label.clone(),
                metric,
                trial,
                seed,
                config: tc,
                error: outcome.as_ref().err().map(ToString::to_string),
                result: outcome.ok(),
            }
        })
    })
}

pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summary: SummaryTable,
    pub curves: Vec<CurveSet>,
}

/// Runs the experiment and writes all artifacts under `out`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path, predictor: &dyn Predictor) -> Result<ExperimentOutput> {
    config.validate()?;
    let worlds = load_worlds(config)?;
    let records = run_trials(config, &worlds, predictor);
    let trials_dir = out.join("trials");
    std::fs::create_dir_all(&trials_dir)?;
    for r in &records {
        let path = trials_dir.join(TrialRecord::file_name(&r.world, r.metric, r.trial));
        std::fs::write(path, serde_json::to_string_pretty(r)?)?;
    }
    let mut csv = String::from(RESULTS_HEADER);
    csv.push('\n');
    for r in &records {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    std::fs::write(out.join("results.csv"), csv)?;
    let summary = SummaryTable::from_records(&records, config.trials_per_cell);
    std::fs::write(out.join("summary.csv"), summary.to_csv())?;
    let labels: Vec<String> = worlds.iter().map(|w| w.0.clone()).collect();
    let curves = render_curves(
        out,
        &labels,
        &config.metrics,
        config.trials_per_cell,
        config.curve_points,
    )?;
    Ok(ExperimentOutput {
        records,
        summary,
        curves,
    })
}

/// Reads back every per-trial JSON the config implies; errors list the
/// missing ones.
pub fn read_records(out: &Path, worlds: &[String], metrics: &[Metric], trials: usize) -> Result<Vec<TrialRecord>> {
    let mut records = Vec::new();
    let mut missing: Vec<PathBuf> = Vec::new();
    for w in worlds {
        for &m in metrics {
            for t in 0..trials {
                let path = out.join("trials").join(TrialRecord::file_name(w, m, t));
                match std::fs::read_to_string(&path) {
                    Ok(text) => records.push(serde_json::from_str(&text)?),
                    Err(_) => missing.push(path),
                }
            }
        }
    }
    if !missing.is_empty() {
        let list: Vec<String> = missing.iter().map(|p| p.display().to_string()).collect();
        return Err(Error::InvalidParam(format!(
            "missing trial artifacts: {}",
            list.join(", ")
        )));
    }
    Ok(records)
}
