use std::collections::{HashSet, VecDeque};

use rand::Rng;

use super::astar::{astar_path, free_moves};
use super::{select_best_frontier, utility, ExplorationConfig, FrontierScore, StepRecord, Termination, TrialResult};
use crate::error::{Error, Result};
use crate::frontier::{
    best_viewpoint, detect_frontiers, fallback_viewpoint, sample_viewpoints, yaw_of, Frontier, Viewpoint, YAW_COUNT,
};
use crate::information::{Evaluator, Metric};
use crate::mapping::{
    compose_prediction_map, compose_variance_map, extract_crop, GridIndex, OccupancyGrid, PredictionMap, VarianceMap,
};
use crate::par;
use crate::prediction::Predictor;
use crate::seed::{derive_seed, hash_str, rng_from};
use crate::sensing::{simulate_scan, Pose2D};
use crate::world::WorldGrid;

/// Ground-truth cells coverage is scored on: every free cell, and every
/// occupied cell 4-adjacent to a free one.
#[derive(Clone, Debug)]
pub struct CoverageTargets {
    free: Vec<usize>,
    walls: Vec<usize>,
}

pub fn coverage_targets(world: &WorldGrid) -> CoverageTargets {
    let g = world.geometry();
    let mut free = Vec::new();
    let mut walls = Vec::new();
    for i in 0..g.len() {
        let c = g.cell_at(i);
        if world.is_free(c) {
            free.push(i);
        } else if [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .any(|&(dx, dy)| world.is_free(c.offset(dx, dy)))
        {
            walls.push(i);
        }
    }
    CoverageTargets { free, walls }
}

impl CoverageTargets {
    pub fn len(&self) -> usize {
        self.free.len() + self.walls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fraction of targets the map classifies correctly.
    pub fn coverage(&self, map: &OccupancyGrid) -> f64 {
        let ok = self.free.iter().filter(|&&i| map.is_free(i)).count()
            + self.walls.iter().filter(|&&i| map.is_occupied(i)).count();
        ok as f64 / self.len().max(1) as f64
    }
}

/// A free cell whose 8 neighbours are free too, drawn from `seed`; any free
/// cell if there is no such interior cell.
pub fn pick_start(world: &WorldGrid, seed: u64) -> Pose2D {
    let interior: Vec<GridIndex> = world
        .free_cells()
        .filter(|c| (-1..=1).all(|dy| (-1..=1).all(|dx| world.is_free(c.offset(dx, dy)))))
        .collect();
    let pool: Vec<GridIndex> = if interior.is_empty() {
        world.free_cells().collect()
    } else {
        interior
    };
    let mut rng = rng_from(&[seed, hash_str("start")]);
    let c = pool[rng.random_range(0..pool.len())];
    let (x, y) = world.geometry().cell_center(c);
    Pose2D::new(x, y, 0.0)
}

/// Cells reachable from `start` under the planner's move rules.
fn reachable_from(map: &OccupancyGrid, start: GridIndex) -> Vec<bool> {
    let g = map.geometry();
    let mut seen = vec![false; g.len()];
    let Some(si) = g.index(start) else { return seen };
    seen[si] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        for (n, _) in free_moves(map, c) {
            let j = g.index(n).expect("free cells are inside the grid");
            if !seen[j] {
                seen[j] = true;
                queue.push_back(n);
            }
        }
    }
    seen
}

struct Trial<'a> {
    world: &'a WorldGrid,
    config: &'a ExplorationConfig,
    targets: CoverageTargets,
    map: OccupancyGrid,
    pose: Pose2D,
    path_length: f64,
    curve: Vec<(f64, f64)>,
}

impl Trial<'_> {
    fn scan(&mut self, pose: Pose2D) -> Result<()> {
        let scan = simulate_scan(self.world, pose, &self.config.sensor)?;
        self.map.update(&scan, &self.config.ism)?;
        self.curve.push((self.path_length, self.targets.coverage(&self.map)));
        Ok(())
    }

    fn rotate(&mut self) -> Result<()> {
        for k in 0..YAW_COUNT {
            self.scan(self.pose.with_yaw(yaw_of(k)))?;
        }
        Ok(())
    }

    /// Teleports along the A* path, re-scanning every `move_stride` meters
    /// and on arrival.
    fn travel(&mut self, goal: Pose2D) -> Result<()> {
        let g = *self.map.geometry();
        let from = g.cell_of(self.pose.x, self.pose.y);
        let to = g.cell_of(goal.x, goal.y);
        let Some((_, path)) = astar_path(&self.map, from, to)? else {
            return Ok(());
        };
        let mut since_scan = 0.0;
        for w in path.windows(2) {
            if !self.map.cell_free(w[1]) {
                // Blocked by a fresh observation: stop here and replan.
                return self.scan(self.pose);
            }
            let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
            let step = if dx != 0 && dy != 0 {
                std::f64::consts::SQRT_2
            } else {
                1.0
            } * g.resolution;
            let (x, y) = g.cell_center(w[1]);
            self.pose = Pose2D::new(x, y, f64::from(dy).atan2(f64::from(dx)));
            self.path_length += step;
            since_scan += step;
            if since_scan >= self.config.move_stride - 1e-9 && w[1] != to {
                self.scan(self.pose)?;
                since_scan = 0.0;
            }
        }
        self.pose = goal;
        self.scan(goal)
    }
}

struct Plan {
    scores: Vec<FrontierScore>,
    metric: Metric,
}

/// Viewpoints that produced no map change, and the frontier cells they were
/// aimed at.
#[derive(Default)]
struct Failures {
    viewpoints: HashSet<GridIndex>,
    frontier_cells: HashSet<GridIndex>,
}

fn plan_step(
    trial: &Trial<'_>,
    frontiers: &[Frontier],
    failures: &Failures,
    predictor: &dyn Predictor,
    step: usize,
    events: &mut Vec<String>,
) -> Result<Plan> {
    let cfg = trial.config;
    let map = &trial.map;
    let mut metric = cfg.metric;
    let mut prediction: Option<PredictionMap> = None;
    let mut variance: Option<VarianceMap> = None;
    if metric.uses_prediction() {
        let ensembles = par::map(cfg.exec, frontiers, |f| {
            let crop = extract_crop(map, f.centroid);
            predictor.predict(&crop, cfg.n_samples, derive_seed(&[cfg.seed, step as u64, f.id as u64]))
        });
        match ensembles.into_iter().collect::<std::result::Result<Vec<_>, _>>() {
            Ok(ensembles) => {
                let (means, vars): (Vec<_>, Vec<_>) = ensembles.iter().map(|e| e.patches()).unzip();
                prediction = Some(compose_prediction_map(map, &means));
                variance = Some(compose_variance_map(map, &vars));
            }
            Err(e) => {
                log::warn!("step {step}: predictor failed: {e}; using Im");
                events.push(format!("step {step}: predictor failed ({e}); fell back to Im"));
                metric = Metric::Im;
            }
        }
    }
    let evaluator = Evaluator::new(
        metric,
        map,
        prediction.as_ref(),
        variance.as_ref(),
        cfg.sensor,
        cfg.fsmi,
        cfg.metric_options,
    )?;
    let g = *map.geometry();
    let robot = g.cell_of(trial.pose.x, trial.pose.y);
    let reachable = reachable_from(map, robot);
    let usable = |p: &Pose2D| {
        let c = g.cell_of(p.x, p.y);
        g.index(c).is_some_and(|i| reachable[i]) && !failures.viewpoints.contains(&c)
    };

    let scores = par::map(cfg.exec, frontiers, |f| -> Result<FrontierScore> {
        let fallback = fallback_viewpoint(f, map).filter(|p| usable(p));
        // After a failed visit only the adjacent cell is trusted.
        let retried = f.cells.iter().any(|c| failures.frontier_cells.contains(c));
        let viewpoint = if metric == Metric::In || retried {
            // Nearest-frontier: stand next to the frontier and face it.
            let target = fallback.or_else(|| {
                if retried {
                    return None;
                }
                sample_viewpoints(f, map, &cfg.frontier.ring_radii, cfg.frontier.per_ring)
                    .into_iter()
                    .find(|p| usable(p))
            });
            target.map(|p| {
                let (cx, cy) = g.cell_center(f.centroid);
                let pose = p.with_yaw((cy - p.y).atan2(cx - p.x));
                Viewpoint {
                    pose,
                    frontier_id: f.id,
                    info: if metric == Metric::In {
                        1.0
                    } else {
                        evaluator.evaluate(pose).unwrap_or(0.0)
                    },
                }
            })
        } else {
            let mut candidates: Vec<Pose2D> =
                sample_viewpoints(f, map, &cfg.frontier.ring_radii, cfg.frontier.per_ring)
                    .into_iter()
                    .filter(|p| usable(p))
                    .collect();
            if candidates.is_empty() {
                candidates.extend(fallback);
            }
            if candidates.is_empty() {
                None
            } else {
                let key = |p: &Pose2D| g.index(g.cell_of(p.x, p.y)).unwrap_or(usize::MAX);
                Some(best_viewpoint(&candidates, f.id, key, |p| {
                    evaluator.evaluate(*p).unwrap_or(0.0)
                })?)
            }
        };
        let Some(viewpoint) = viewpoint else {
            return Ok(FrontierScore {
                viewpoint: Viewpoint {
                    pose: trial.pose,
                    frontier_id: f.id,
                    info: 0.0,
                },
                cost: None,
                utility: 0.0,
            });
        };
        let cost =
            astar_path(map, robot, g.cell_of(viewpoint.pose.x, viewpoint.pose.y))?.map(|(m, _)| m.meters(g.resolution));
        Ok(FrontierScore {
            viewpoint,
            cost,
            utility: utility(viewpoint.info, cost, &cfg.utility),
        })
    });
    Ok(Plan {
        scores: scores.into_iter().collect::<Result<_>>()?,
        metric,
    })
}

/// Runs one exploration trial in `world`. Deterministic in the config
/// (including its seed) and the predictor's own determinism.
pub fn run_exploration(
    world: &WorldGrid,
    config: &ExplorationConfig,
    predictor: &dyn Predictor,
) -> Result<TrialResult> {
    config.validate()?;
    let start = config.start.unwrap_or_else(|| pick_start(world, config.seed));
    let g = world.geometry();
    let start_cell = g.cell_of(start.x, start.y);
    if !world.is_free(start_cell) {
        return Err(Error::NotFree {
            x: start_cell.x,
            y: start_cell.y,
        });
    }
    let mut trial = Trial {
        world,
        config,
        targets: coverage_targets(world),
        map: OccupancyGrid::new(g),
        pose: start,
        path_length: 0.0,
        curve: Vec::new(),
    };
    // The robot stands on its start cell, which the sensor never sees.
    trial.map.set_log_odds(start_cell, config.ism.log_free());
    trial.rotate()?;

    let mut log = Vec::new();
    let mut events = Vec::new();
    let mut failures = Failures::default();
    let mut idle = 0usize;
    let mut steps = 0usize;
    let terminated = loop {
        let frontiers = detect_frontiers(&trial.map, trial.pose, config.frontier.min_size)?;
        if frontiers.is_empty() {
            break Termination::Complete;
        }
        if steps >= config.step_budget {
            break Termination::StepBudget;
        }

        let plan = plan_step(&trial, &frontiers, &failures, predictor, steps, &mut events)?;
        let Some(chosen) = select_best_frontier(&plan.scores).copied() else {
            events.push(format!("step {steps}: no usable viewpoint on any frontier"));
            break Termination::Stuck;
        };
        let known_before = trial.map.known_count();
        trial.travel(chosen.viewpoint.pose)?;
        if trial.map.known_count() == known_before {
            trial.rotate()?;
        }
        if trial.map.known_count() == known_before {
            idle += 1;
            let p = chosen.viewpoint.pose;
            failures.viewpoints.insert(g.cell_of(p.x, p.y));
            let f = frontiers
                .iter()
                .find(|f| f.id == chosen.viewpoint.frontier_id)
                .expect("chosen frontier");
            failures.frontier_cells.extend(f.cells.iter().copied());
        } else {
            idle = 0;
        }
        log.push(StepRecord {
            step: steps,
            frontiers: frontiers.len(),
            frontier_id: Some(chosen.viewpoint.frontier_id),
            utility: chosen.utility,
            info: chosen.viewpoint.info,
            cost: chosen.cost.unwrap_or(0.0),
            metric: plan.metric,
            path_length: trial.path_length,
            coverage: trial.curve.last().map_or(0.0, |c| c.1),
        });
        steps += 1;
        if idle >= config.stuck_limit {
            break Termination::Stuck;
        }
    };

    Ok(TrialResult {
        start,
        steps,
        total_path_length: trial.path_length,
        coverage_curve: trial.curve,
        terminated,
        log,
        events,
    })
}
