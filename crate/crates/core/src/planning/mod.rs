//! Frontier selection and the exploration loop.

mod astar;
mod explore;

pub use astar::{astar_cost, astar_path, free_moves, MoveCount};
pub use explore::{coverage_targets, pick_start, run_exploration, CoverageTargets};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontier::{FrontierParams, Viewpoint};
use crate::information::{FsmiParams, Metric, MetricOptions};
use crate::mapping::InverseSensorModel;
use crate::par::Exec;
use crate::sensing::{Pose2D, SensorParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    pub lambda: f64,
}

impl Default for UtilityParams {
    fn default() -> Self {
        Self { lambda: 0.05 }
    }
}

/// `info · exp(−λ·cost)`; zero when the viewpoint is unreachable.
pub fn utility(info: f64, cost: Option<f64>, params: &UtilityParams) -> f64 {
    match cost {
        Some(c) => info * (-params.lambda * c).exp(),
        None => 0.0,
    }
}

/// A frontier's representative viewpoint with its travel cost and utility.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierScore {
    pub viewpoint: Viewpoint,
    /// Path length in meters, `None` when unreachable.
    pub cost: Option<f64>,
    pub utility: f64,
}

/// Highest utility among reachable viewpoints, ties to the lowest frontier
/// id. `None` when nothing is reachable.
pub fn select_best_frontier(scores: &[FrontierScore]) -> Option<&FrontierScore> {
    let mut best: Option<&FrontierScore> = None;
    for s in scores.iter().filter(|s| s.cost.is_some()) {
        let better = match best {
            None => true,
            Some(b) => {
                s.utility > b.utility || (s.utility == b.utility && s.viewpoint.frontier_id < b.viewpoint.frontier_id)
            }
        };
        if better {
            best = Some(s);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationConfig {
    pub metric: Metric,
    pub sensor: SensorParams,
    pub ism: InverseSensorModel,
    pub fsmi: FsmiParams,
    pub utility: UtilityParams,
    pub frontier: FrontierParams,
    pub metric_options: MetricOptions,
    /// Predictor samples per crop.
    pub n_samples: usize,
    pub seed: u64,
    pub step_budget: usize,
    /// Travel between re-scans, meters.
    pub move_stride: f64,
    /// Consecutive steps without map change before giving up.
    pub stuck_limit: usize,
    /// Start pose; drawn from `seed` when absent.
    pub start: Option<Pose2D>,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            metric: Metric::PIm,
            sensor: SensorParams::default(),
            ism: InverseSensorModel::default(),
            fsmi: FsmiParams::default(),
            utility: UtilityParams::default(),
            frontier: FrontierParams::default(),
            metric_options: MetricOptions::default(),
            n_samples: 10,
            seed: 0,
            step_budget: 200,
            move_stride: 1.0,
            stuck_limit: 5,
            start: None,
            exec: Exec::default(),
        }
    }
}

impl ExplorationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(m.into()));
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1");
        }
        if !(self.move_stride > 0.0 && self.move_stride.is_finite()) {
            return bad("move_stride must be positive");
        }
        if !(self.utility.lambda >= 0.0 && self.utility.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if self.stuck_limit == 0 {
            return bad("stuck_limit must be at least 1");
        }
        if self.frontier.per_ring == 0 || self.frontier.ring_radii.iter().any(|r| !(*r >= 0.0)) {
            return bad("viewpoint rings need per_ring >= 1 and non-negative radii");
        }
        SensorParams::new(self.sensor.max_range, self.sensor.fov, self.sensor.beam_count)?;
        InverseSensorModel::new(self.ism.delta_occ, self.ism.delta_free)?;
        FsmiParams::new(self.fsmi.h, self.fsmi.delta_occ, self.fsmi.delta_free)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Complete,
    StepBudget,
    Stuck,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Complete => "complete",
            Termination::StepBudget => "step-budget",
            Termination::Stuck => "stuck",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub frontiers: usize,
    /// `None` when no frontier was reachable.
    pub frontier_id: Option<usize>,
    pub utility: f64,
    pub info: f64,
    pub cost: f64,
    /// Metric actually used (differs from the configured one after a
    /// predictor failure).
    pub metric: Metric,
    pub path_length: f64,
    pub coverage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub start: Pose2D,
    pub steps: usize,
    pub total_path_length: f64,
    /// `(path length, coverage)` after every scan.
    pub coverage_curve: Vec<(f64, f64)>,
    pub terminated: Termination,
    pub log: Vec<StepRecord>,
    /// Predictor failures and other recoveries, in order.
    pub events: Vec<String>,
}

impl TrialResult {
    pub fn final_coverage(&self) -> f64 {
        self.coverage_curve.last().map_or(0.0, |c| c.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn score(id: usize, info: f64, cost: Option<f64>) -> FrontierScore {
        FrontierScore {
            viewpoint: Viewpoint {
                pose: Pose2D::new(0.0, 0.0, 0.0),
                frontier_id: id,
                info,
            },
            cost,
            utility: utility(info, cost, &UtilityParams::default()),
        }
    }

    #[test]
    fn utility_values() {
        let p = UtilityParams::default();
        assert_eq!(utility(1.0, Some(0.0), &p), 1.0);
        assert_abs_diff_eq!(utility(1.0, Some(20.0), &p), 0.367_879_441_171_442_3, epsilon = 1e-15);
        assert_eq!(utility(0.0, Some(3.0), &p), 0.0);
        assert_eq!(utility(5.0, None, &p), 0.0);
    }

    #[test]
    fn selection_rules() {
        assert_eq!(
            select_best_frontier(&[score(4, 2.0, Some(9.0))])
                .unwrap()
                .viewpoint
                .frontier_id,
            4
        );
        let near = [score(0, 1.0, Some(5.0)), score(1, 1.0, Some(1.0))];
        assert_eq!(select_best_frontier(&near).unwrap().viewpoint.frontier_id, 1);
        let tie = [score(3, 1.0, Some(1.0)), score(2, 1.0, Some(1.0))];
        assert_eq!(select_best_frontier(&tie).unwrap().viewpoint.frontier_id, 2);
        let zero = [score(1, 0.0, Some(1.0)), score(0, 5.0, None)];
        assert_eq!(select_best_frontier(&zero).unwrap().viewpoint.frontier_id, 1);
        assert!(select_best_frontier(&[score(0, 5.0, None)]).is_none());
        assert!(select_best_frontier(&[]).is_none());
    }

    #[test]
    fn selection_scale_invariant() {
        let base = [
            score(0, 3.0, Some(4.0)),
            score(1, 2.0, Some(1.0)),
            score(2, 7.0, Some(30.0)),
        ];
        let pick = select_best_frontier(&base).unwrap().viewpoint.frontier_id;
        for k in [1e-3, 0.5, 2.0, 1e4] {
            let scaled: Vec<_> = base
                .iter()
                .map(|s| score(s.viewpoint.frontier_id, s.viewpoint.info * k, s.cost))
                .collect();
            assert_eq!(select_best_frontier(&scaled).unwrap().viewpoint.frontier_id, pick);
        }
    }

    #[test]
    fn config_validation() {
        assert!(ExplorationConfig::default().validate().is_ok());
        let bad = [
            ExplorationConfig {
                n_samples: 0,
                ..Default::default()
            },
            ExplorationConfig {
                move_stride: 0.0,
                ..Default::default()
            },
            ExplorationConfig {
                utility: UtilityParams { lambda: -1.0 },
                ..Default::default()
            },
            ExplorationConfig {
                stuck_limit: 0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }
}
