//! Poses, the simulated planar depth sensor and the grid ray walker shared
//! by mapping and every ray-based information metric.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::WorldGrid;

/// Distances closer than this are treated as a simultaneous crossing of an
/// x and a y cell boundary (the ray passes through a cell corner).
const CORNER_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridIndex {
    pub x: i32,
    pub y: i32,
}

impl GridIndex {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }
}

/// Raster extent and placement shared by worlds and maps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    /// World coordinates of the lower-left corner of cell (0, 0).
    pub origin_x: f64,
    pub origin_y: f64,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, resolution: f64, origin_x: f64, origin_y: f64) -> Self {
        Self {
            width,
            height,
            resolution,
            origin_x,
            origin_y,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, c: GridIndex) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    /// Row-major index; `None` outside the grid.
    pub fn index(&self, c: GridIndex) -> Option<usize> {
        self.contains(c).then(|| c.y as usize * self.width + c.x as usize)
    }

    pub fn cell_at(&self, i: usize) -> GridIndex {
        GridIndex::new((i % self.width) as i32, (i / self.width) as i32)
    }

    pub fn cell_of(&self, x: f64, y: f64) -> GridIndex {
        GridIndex::new(
            ((x - self.origin_x) / self.resolution).floor() as i32,
            ((y - self.origin_y) / self.resolution).floor() as i32,
        )
    }

    pub fn cell_center(&self, c: GridIndex) -> (f64, f64) {
        (
            self.origin_x + (f64::from(c.x) + 0.5) * self.resolution,
            self.origin_y + (f64::from(c.y) + 0.5) * self.resolution,
        )
    }
}

/// Planar pose; yaw normalized to (−π, π].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn with_yaw(self, yaw: f64) -> Self {
        Self::new(self.x, self.y, yaw)
    }
}

/// Maps an angle into (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    pub max_range: f64,
    pub fov: f64,
    pub beam_count: usize,
}

impl Default for SensorParams {
    /// 5 m range, 90° field of view, 91 beams (1° spacing).
    fn default() -> Self {
        Self {
            max_range: 5.0,
            fov: PI / 2.0,
            beam_count: 91,
        }
    }
}

impl SensorParams {
    pub fn new(max_range: f64, fov: f64, beam_count: usize) -> Result<Self> {
        if !(max_range.is_finite() && max_range > 0.0) {
            return Err(Error::InvalidParam(format!("max_range must be > 0, got {max_range}")));
        }
        if !(fov > 0.0 && fov <= TAU + 1e-12) {
            return Err(Error::InvalidParam(format!("fov must lie in (0, 2π], got {fov}")));
        }
        if beam_count == 0 {
            return Err(Error::InvalidParam("beam_count must be positive".into()));
        }
        Ok(Self {
            max_range,
            fov,
            beam_count,
        })
    }

    /// Beam angles spanning `[yaw − fov/2, yaw + fov/2]` uniformly. A full
    /// circle is split into `beam_count` equal sectors instead so the first
    /// and last beams do not coincide.
    pub fn beam_angles(&self, yaw: f64) -> Vec<f64> {
        let n = self.beam_count;
        if n == 1 {
            return vec![yaw];
        }
        let full_circle = self.fov >= TAU - 1e-12;
        let (start, step) = if full_circle {
            (yaw - PI, TAU / n as f64)
        } else {
            (yaw - self.fov / 2.0, self.fov / (n - 1) as f64)
        };
        (0..n).map(|i| start + i as f64 * step).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    pub angle: f64,
    pub range: f64,
    pub hit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub origin: Pose2D,
    pub max_range: f64,
    pub beams: Vec<Beam>,
}

/// Cells crossed by a ray, in order, with their boundary distances.
///
/// `boundaries[m]` is the distance at which the ray enters `cells[m]`, and
/// `boundaries[n]` is where it leaves the last cell (clipped to the range).
/// The origin cell is never part of a trace.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BeamTrace {
    pub cells: Vec<GridIndex>,
    pub boundaries: Vec<f64>,
}

impl BeamTrace {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Keeps the first `n` cells.
    pub fn truncate(&mut self, n: usize) {
        if n < self.cells.len() {
            self.cells.truncate(n);
            self.boundaries.truncate(n + 1);
        }
    }
}

/// Incremental grid walk from `(x, y)` along `angle` out to `max_range`.
///
/// Returns every cell whose interior the segment crosses, excluding the
/// start cell, and stops early at the grid edge. Occupancy is ignored; the
/// caller decides where a beam terminates.
pub fn trace_beam(geom: &GridGeometry, x: f64, y: f64, angle: f64, max_range: f64) -> Result<BeamTrace> {
    let res = geom.resolution;
    let px = (x - geom.origin_x) / res;
    let py = (y - geom.origin_y) / res;
    if !(px >= 0.0 && py >= 0.0 && px < geom.width as f64 && py < geom.height as f64) {
        return Err(Error::OutsideGrid { x, y });
    }
    let mut trace = BeamTrace::default();
    if max_range <= 0.0 {
        return Ok(trace);
    }

    let (mut dx, mut dy) = (angle.cos(), angle.sin());
    if dx.abs() < 1e-15 {
        dx = 0.0;
    }
    if dy.abs() < 1e-15 {
        dy = 0.0;
    }
    let mut cell = GridIndex::new(px.floor() as i32, py.floor() as i32);

    // Distance to the first x / y boundary and the per-cell increments.
    let axis = |p: f64, c: i32, d: f64| -> (i32, f64, f64) {
        if d > 0.0 {
            (1, (f64::from(c) + 1.0 - p) * res / d, res / d)
        } else if d < 0.0 {
            (-1, (p - f64::from(c)) * res / -d, res / -d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (step_x, mut t_max_x, t_delta_x) = axis(px, cell.x, dx);
    let (step_y, mut t_max_y, t_delta_y) = axis(py, cell.y, dy);

    loop {
        let t_exit = t_max_x.min(t_max_y);
        if t_exit >= max_range {
            if !trace.cells.is_empty() {
                trace.boundaries.push(max_range);
            }
            break;
        }
        if (t_max_x - t_max_y).abs() <= CORNER_EPS {
            cell.x += step_x;
            cell.y += step_y;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        } else if t_max_x < t_max_y {
            cell.x += step_x;
            t_max_x += t_delta_x;
        } else {
            cell.y += step_y;
            t_max_y += t_delta_y;
        }
        if !geom.contains(cell) {
            if !trace.cells.is_empty() {
                trace.boundaries.push(t_exit);
            }
            break;
        }
        trace.cells.push(cell);
        trace.boundaries.push(t_exit);
    }
    Ok(trace)
}

/// Noise-free scan of the ground truth. Each beam stops at the entry
/// distance of the first occupied cell, or reports `max_range` with
/// `hit = false`.
pub fn simulate_scan(world: &WorldGrid, pose: Pose2D, sensor: &SensorParams) -> Result<Scan> {
    let geom = world.geometry();
    let cell = geom.cell_of(pose.x, pose.y);
    if !geom.contains(cell) {
        return Err(Error::OutsideGrid { x: pose.x, y: pose.y });
    }
    if world.is_occupied(cell) {
        return Err(Error::NotFree { x: cell.x, y: cell.y });
    }
    let mut beams = Vec::with_capacity(sensor.beam_count);
    for angle in sensor.beam_angles(pose.yaw) {
        let trace = trace_beam(&geom, pose.x, pose.y, angle, sensor.max_range)?;
        let first_hit = trace.cells.iter().position(|&c| world.is_occupied(c));
        let beam = match first_hit {
            Some(m) => Beam {
                angle,
                range: trace.boundaries[m],
                hit: true,
            },
            None => Beam {
                angle,
                range: sensor.max_range,
                hit: false,
            },
        };
        beams.push(beam);
    }
    Ok(Scan {
        origin: pose,
        max_range: sensor.max_range,
        beams,
    })
}
