//! 8-connected A* over known-free cells.
//!
//! Path costs are kept as (straight, diagonal) move counts so equal paths
//! compare equal bit for bit; `len()` converts to meters.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::{GridIndex, OccupancyGrid};
use crate::sensing::Pose2D;

/// Counts of axis and diagonal moves along a path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MoveCount {
    pub straight: u32,
    pub diagonal: u32,
}

impl MoveCount {
    /// Length in cells.
    pub fn cells(self) -> f64 {
        f64::from(self.straight) + f64::from(self.diagonal) * SQRT_2
    }

    pub fn meters(self, resolution: f64) -> f64 {
        self.cells() * resolution
    }
}

/// Octile distance in cells, admissible and consistent for 8-connected moves.
fn octile(a: GridIndex, b: GridIndex) -> f64 {
    let dx = a.x.abs_diff(b.x);
    let dy = a.y.abs_diff(b.y);
    let (lo, hi) = (dx.min(dy), dx.max(dy));
    f64::from(hi - lo) + f64::from(lo) * SQRT_2
}

/// The moves allowed out of `c`: the 4 axis neighbours that are free, and
/// the diagonals whose cell and both flanking axis cells are free.
pub fn free_moves(map: &OccupancyGrid, c: GridIndex) -> impl Iterator<Item = (GridIndex, bool)> + '_ {
    const MOVES: [(i32, i32); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
    MOVES.into_iter().filter_map(move |(dx, dy)| {
        let n = c.offset(dx, dy);
        let diagonal = dx != 0 && dy != 0;
        let ok = map.cell_free(n) && (!diagonal || (map.cell_free(c.offset(dx, 0)) && map.cell_free(c.offset(0, dy))));
        ok.then_some((n, diagonal))
    })
}

struct Open {
    f: f64,
    h: f64,
    i: usize,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // Max-heap: smallest f first, then smallest h, then lowest index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(other.h.total_cmp(&self.h))
            .then(other.i.cmp(&self.i))
    }
}

/// Shortest path from `start` to `goal` and its move counts, or `None` when
/// the goal is not free or cannot be reached.
pub fn astar_path(
    map: &OccupancyGrid,
    start: GridIndex,
    goal: GridIndex,
) -> Result<Option<(MoveCount, Vec<GridIndex>)>> {
    let g = *map.geometry();
    let Some(si) = g.index(start) else {
        return Err(Error::NotFree { x: start.x, y: start.y });
    };
    if !map.is_free(si) {
        return Err(Error::NotFree { x: start.x, y: start.y });
    }
    let Some(gi) = g.index(goal).filter(|&i| map.is_free(i)) else {
        return Ok(None);
    };

    let mut best: Vec<Option<MoveCount>> = vec![None; g.len()];
    let mut parent = vec![usize::MAX; g.len()];
    let mut closed = vec![false; g.len()];
    let mut heap = BinaryHeap::new();
    best[si] = Some(MoveCount::default());
    let h0 = octile(start, goal);
    heap.push(Open { f: h0, h: h0, i: si });
    while let Some(Open { i, .. }) = heap.pop() {
        if closed[i] {
            continue;
        }
        closed[i] = true;
        let here = best[i].expect("queued cells have a cost");
        if i == gi {
            let mut path = vec![goal];
            let mut k = gi;
            while k != si {
                k = parent[k];
                path.push(g.cell_at(k));
            }
            path.reverse();
            return Ok(Some((here, path)));
        }
        let c = g.cell_at(i);
        for (n, diagonal) in free_moves(map, c) {
            let j = g.index(n).expect("free cells are inside the grid");
            if closed[j] {
                continue;
            }
            let mut next = here;
            if diagonal {
                next.diagonal += 1;
            } else {
                next.straight += 1;
            }
            if best[j].is_none_or(|b| next.cells() < b.cells()) {
                best[j] = Some(next);
                parent[j] = i;
                let h = octile(n, goal);
                heap.push(Open {
                    f: next.cells() + h,
                    h,
                    i: j,
                });
            }
        }
    }
    Ok(None)
}

/// Shortest free-space path length in meters between the cells holding
/// `start` and `goal`; `None` when unreachable.
pub fn astar_cost(map: &OccupancyGrid, start: Pose2D, goal: Pose2D) -> Result<Option<f64>> {
    let g = map.geometry();
    let (s, t) = (g.cell_of(start.x, start.y), g.cell_of(goal.x, goal.y));
    if !g.contains(s) {
        return Err(Error::OutsideGrid { x: start.x, y: start.y });
    }
    Ok(astar_path(map, s, t)?.map(|(m, _)| m.meters(g.resolution)))
}
