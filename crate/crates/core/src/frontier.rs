//! Frontier detection and viewpoint generation.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_4, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::{GridIndex, OccupancyGrid};
use crate::sensing::Pose2D;

/// Yaws tried at every viewpoint candidate.
pub const YAW_COUNT: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierParams {
    pub min_size: usize,
    /// Ring radii around the centroid, meters.
    pub ring_radii: Vec<f64>,
    pub per_ring: usize,
}

impl Default for FrontierParams {
    fn default() -> Self {
        Self {
            min_size: 3,
            ring_radii: vec![0.4, 0.8, 1.2],
            per_ring: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub id: usize,
    pub cells: Vec<GridIndex>,
    pub centroid: GridIndex,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub pose: Pose2D,
    pub frontier_id: usize,
    pub info: f64,
}

const N4: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const N8: [(i32, i32); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Breadth-first search over free cells reachable from the robot, collecting
/// unknown cells 4-adjacent to them, clustered by 8-connectivity. Clusters
/// smaller than `min_size` are dropped; the rest are ordered by their
/// smallest row-major cell index and numbered from 0.
pub fn detect_frontiers(map: &OccupancyGrid, robot: Pose2D, min_size: usize) -> Result<Vec<Frontier>> {
    let g = *map.geometry();
    let start = g.cell_of(robot.x, robot.y);
    let Some(start_i) = g.index(start) else {
        return Err(Error::OutsideGrid { x: robot.x, y: robot.y });
    };
    if !map.is_free(start_i) {
        return Err(Error::NotFree { x: start.x, y: start.y });
    }

    let mut visited = vec![false; g.len()];
    let mut is_frontier = vec![false; g.len()];
    let mut queue = VecDeque::from([start_i]);
    visited[start_i] = true;
    while let Some(i) = queue.pop_front() {
        let c = g.cell_at(i);
        for (dx, dy) in N4 {
            let Some(j) = g.index(c.offset(dx, dy)) else { continue };
            if map.is_free(j) {
                if !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            } else if map.is_unknown(j) {
                is_frontier[j] = true;
            }
        }
    }

    // Cluster in row-major order so each cluster's first cell is its minimum.
    let mut clustered = vec![false; g.len()];
    let mut frontiers = Vec::new();
    for seed in 0..g.len() {
        if !is_frontier[seed] || clustered[seed] {
            continue;
        }
        clustered[seed] = true;
        let mut cells = Vec::new();
        let mut queue = VecDeque::from([seed]);
        while let Some(i) = queue.pop_front() {
            let c = g.cell_at(i);
            cells.push(c);
            for (dx, dy) in N8 {
                if let Some(j) = g.index(c.offset(dx, dy)) {
                    if is_frontier[j] && !clustered[j] {
                        clustered[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if cells.len() >= min_size.max(1) {
            cells.sort_by_key(|c| (c.y, c.x));
            let centroid = rounded_mean(&cells);
            frontiers.push(Frontier {
                id: frontiers.len(),
                cells,
                centroid,
            });
        }
    }
    Ok(frontiers)
}

fn rounded_mean(cells: &[GridIndex]) -> GridIndex {
    let n = cells.len() as f64;
    let sx: f64 = cells.iter().map(|c| f64::from(c.x)).sum();
    let sy: f64 = cells.iter().map(|c| f64::from(c.y)).sum();
    GridIndex::new((sx / n).round() as i32, (sy / n).round() as i32)
}

/// Candidate positions on rings around the frontier centroid, `per_ring`
/// evenly spaced angles per ring starting at +x. Only candidates in known
/// free cells are kept. Yaw is left at zero.
pub fn sample_viewpoints(frontier: &Frontier, map: &OccupancyGrid, rings: &[f64], per_ring: usize) -> Vec<Pose2D> {
    let g = map.geometry();
    let (cx, cy) = g.cell_center(frontier.centroid);
    let mut out = Vec::with_capacity(rings.len() * per_ring);
    for &r in rings {
        for k in 0..per_ring {
            let a = TAU * k as f64 / per_ring as f64;
            let (x, y) = (cx + r * a.cos(), cy + r * a.sin());
            if map.cell_free(g.cell_of(x, y)) {
                out.push(Pose2D::new(x, y, 0.0));
            }
        }
    }
    out
}

/// A free cell 4-adjacent to the frontier, the one nearest its centroid.
/// Every detected frontier has one, so this is the fallback when no ring
/// candidate lands in free space.
pub fn fallback_viewpoint(frontier: &Frontier, map: &OccupancyGrid) -> Option<Pose2D> {
    let g = map.geometry();
    let mut best: Option<(i64, GridIndex)> = None;
    for &c in &frontier.cells {
        for (dx, dy) in N4 {
            let n = c.offset(dx, dy);
            if map.cell_free(n) {
                let ddx = i64::from(n.x - frontier.centroid.x);
                let ddy = i64::from(n.y - frontier.centroid.y);
                let key = (ddx * ddx + ddy * ddy, n);
                if best.is_none_or(|b| (key.0, (key.1.y, key.1.x)) < (b.0, (b.1.y, b.1.x))) {
                    best = Some(key);
                }
            }
        }
    }
    best.map(|(_, c)| {
        let (x, y) = g.cell_center(c);
        Pose2D::new(x, y, 0.0)
    })
}

pub fn yaw_of(index: usize) -> f64 {
    index as f64 * FRAC_PI_4
}

/// Scores each candidate at the eight yaws `k·π/4`, keeps the best yaw per
/// candidate and returns the best candidate. Ties go to the lowest
/// row-major cell, then the lowest yaw index.
pub fn best_viewpoint<F>(
    candidates: &[Pose2D],
    frontier_id: usize,
    cell_key: impl Fn(&Pose2D) -> usize,
    evaluate: F,
) -> Result<Viewpoint>
where
    F: Fn(&Pose2D) -> f64,
{
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut best: Option<(f64, usize, usize, Pose2D)> = None;
    for cand in candidates {
        let key = cell_key(cand);
        for k in 0..YAW_COUNT {
            let pose = cand.with_yaw(yaw_of(k));
            let info = evaluate(&pose);
            let better = match &best {
                None => true,
                Some((bi, bk, byaw, _)) => info > *bi || (info == *bi && (key, k) < (*bk, *byaw)),
            };
            if better {
                best = Some((info, key, k, pose));
            }
        }
    }
    let (info, _, _, pose) = best.expect("nonempty candidates");
    Ok(Viewpoint {
        pose,
        frontier_id,
        info,
    })
}
