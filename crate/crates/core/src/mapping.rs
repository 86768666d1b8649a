//! Log-odds occupancy grid, Bayesian scan updates, and the crops and
//! composed maps exchanged with predictors.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensing::{trace_beam, Scan};
pub use crate::sensing::{GridGeometry, GridIndex};

/// Log-odds clamp, `ln(1000)`: probabilities stay within about [0.001, 0.999].
pub const LOG_ODDS_LIMIT: f64 = 6.907_755_278_982_137;

/// Side of the square crop handed to predictors.
pub const CROP_SIZE: usize = 256;
/// Side of the centered block a predictor fills in.
pub const PREDICT_SIZE: usize = 80;
/// Offset of the predicted block inside the crop.
pub const PREDICT_OFFSET: usize = (CROP_SIZE - PREDICT_SIZE) / 2;

/// Probability clamp applied to predicted values.
pub const PREDICTION_CLAMP: (f64, f64) = (0.001, 0.999);

#[inline]
pub fn probability_from_log_odds(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Odds multipliers applied to a cell on an occupied / free observation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseSensorModel {
    pub delta_occ: f64,
    pub delta_free: f64,
}

impl Default for InverseSensorModel {
    fn default() -> Self {
        Self {
            delta_occ: 3.0,
            delta_free: 1.0 / 3.0,
        }
    }
}

impl InverseSensorModel {
    pub fn new(delta_occ: f64, delta_free: f64) -> Result<Self> {
        if !(delta_occ.is_finite() && delta_occ > 1.0) {
            return Err(Error::InvalidParam(format!("delta_occ must be > 1, got {delta_occ}")));
        }
        if !(delta_free > 0.0 && delta_free < 1.0) {
            return Err(Error::InvalidParam(format!(
                "delta_free must lie in (0, 1), got {delta_free}"
            )));
        }
        Ok(Self { delta_occ, delta_free })
    }

    pub fn log_occ(&self) -> f64 {
        self.delta_occ.ln()
    }

    /// Exactly `-log_occ()` when the two ratios are reciprocal, so an
    /// occupied and a free observation cancel to a bit-exact zero.
    pub fn log_free(&self) -> f64 {
        if (self.delta_occ * self.delta_free - 1.0).abs() < 1e-12 {
            -self.log_occ()
        } else {
            self.delta_free.ln()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    geometry: GridGeometry,
    log_odds: Vec<f64>,
}

impl OccupancyGrid {
    /// All-unknown map.
    pub fn new(geometry: GridGeometry) -> Self {
        Self {
            geometry,
            log_odds: vec![0.0; geometry.len()],
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn log_odds(&self) -> &[f64] {
        &self.log_odds
    }

    pub fn log_odds_at(&self, i: usize) -> f64 {
        self.log_odds[i]
    }

    /// Sets a cell's log-odds (clamped).
    pub fn set_log_odds(&mut self, c: GridIndex, l: f64) {
        if let Some(i) = self.geometry.index(c) {
            self.log_odds[i] = l.clamp(-LOG_ODDS_LIMIT, LOG_ODDS_LIMIT);
        }
    }

    pub fn probability(&self, i: usize) -> f64 {
        probability_from_log_odds(self.log_odds[i])
    }

    pub fn is_unknown(&self, i: usize) -> bool {
        self.log_odds[i] == 0.0
    }

    pub fn is_free(&self, i: usize) -> bool {
        self.log_odds[i] < 0.0
    }

    pub fn is_occupied(&self, i: usize) -> bool {
        self.log_odds[i] > 0.0
    }

    /// Free-cell test on coordinates; outside the map is not free.
    pub fn cell_free(&self, c: GridIndex) -> bool {
        self.geometry.index(c).is_some_and(|i| self.is_free(i))
    }

    pub fn cell_unknown(&self, c: GridIndex) -> bool {
        self.geometry.index(c).is_some_and(|i| self.is_unknown(i))
    }

    pub fn known_count(&self) -> usize {
        self.log_odds.iter().filter(|&&l| l != 0.0).count()
    }

    /// Fuses one scan. Every cell a beam crosses before its hit cell gets a
    /// free observation and the hit cell an occupied one. Within one call a
    /// cell receives at most one observation, and occupied wins over free.
    /// Cells outside the map are skipped.
    pub fn update(&mut self, scan: &Scan, ism: &InverseSensorModel) -> Result<()> {
        const UNSEEN: u8 = 0;
        const FREE: u8 = 1;
        const OCC: u8 = 2;

        let geom = self.geometry;
        let origin = scan.origin;
        if !geom.contains(geom.cell_of(origin.x, origin.y)) {
            return Err(Error::OutsideGrid {
                x: origin.x,
                y: origin.y,
            });
        }
        let mut mark = vec![UNSEEN; geom.len()];
        let mut touched = Vec::new();
        for beam in &scan.beams {
            let reach = if beam.hit { beam.range + 1e-6 } else { beam.range };
            let trace = trace_beam(&geom, origin.x, origin.y, beam.angle, reach)?;
            for (c, &entry) in trace.cells.iter().zip(&trace.boundaries) {
                let Some(i) = geom.index(*c) else { break };
                let is_hit = beam.hit && entry >= beam.range - 1e-9;
                if mark[i] == UNSEEN {
                    touched.push(i);
                }
                if is_hit {
                    mark[i] = OCC;
                    break;
                } else if mark[i] == UNSEEN {
                    mark[i] = FREE;
                }
            }
        }
        let (l_occ, l_free) = (ism.log_occ(), ism.log_free());
        for i in touched {
            let delta = if mark[i] == OCC { l_occ } else { l_free };
            self.log_odds[i] = (self.log_odds[i] + delta).clamp(-LOG_ODDS_LIMIT, LOG_ODDS_LIMIT);
        }
        Ok(())
    }

    /// ASCII snapshot: header `ogm-map <w> <h> <res>`, rows from 0, with
    /// `#` occupied, `.` free and `?` unknown.
    pub fn to_ascii(&self) -> String {
        let g = &self.geometry;
        let mut s = String::with_capacity((g.width + 1) * g.height + 32);
        let _ = writeln!(s, "ogm-map {} {} {}", g.width, g.height, g.resolution);
        for row in self.log_odds.chunks(g.width) {
            s.extend(row.iter().map(|&l| {
                if l > 0.0 {
                    '#'
                } else if l < 0.0 {
                    '.'
                } else {
                    '?'
                }
            }));
            s.push('\n');
        }
        s
    }

    /// One CSV row of probabilities per map row.
    pub fn write_probability_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for row in self.log_odds.chunks(self.geometry.width) {
            let line: Vec<String> = row
                .iter()
                .map(|&l| format!("{:.6}", probability_from_log_odds(l)))
                .collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Four-channel predictor input centered on a frontier centroid.
#[derive(Clone, Debug, PartialEq)]
pub struct CropInput {
    pub center: GridIndex,
    pub free: Vec<u8>,
    pub occupied: Vec<u8>,
    pub unknown: Vec<u8>,
    pub predicted_area: Vec<u8>,
}

impl CropInput {
    /// Map cell under crop pixel `(row, col)`.
    pub fn map_cell(center: GridIndex, row: usize, col: usize) -> GridIndex {
        let half = (CROP_SIZE / 2) as i32;
        GridIndex::new(center.x - half + col as i32, center.y - half + row as i32)
    }

    /// Map cell under pixel `(row, col)` of the predicted block.
    pub fn predicted_cell(center: GridIndex, row: usize, col: usize) -> GridIndex {
        Self::map_cell(center, row + PREDICT_OFFSET, col + PREDICT_OFFSET)
    }

    pub fn channels(&self) -> [&[u8]; 4] {
        [&self.free, &self.occupied, &self.unknown, &self.predicted_area]
    }
}

pub fn predicted_area_mask() -> Vec<u8> {
    let mut mask = vec![0u8; CROP_SIZE * CROP_SIZE];
    for r in PREDICT_OFFSET..PREDICT_OFFSET + PREDICT_SIZE {
        mask[r * CROP_SIZE + PREDICT_OFFSET..r * CROP_SIZE + PREDICT_OFFSET + PREDICT_SIZE].fill(1);
    }
    mask
}

/// Crops a 256×256 window around `center`; cells beyond the map are unknown.
pub fn extract_crop(map: &OccupancyGrid, center: GridIndex) -> CropInput {
    let n = CROP_SIZE * CROP_SIZE;
    let mut free = vec![0u8; n];
    let mut occupied = vec![0u8; n];
    let mut unknown = vec![0u8; n];
    for r in 0..CROP_SIZE {
        for c in 0..CROP_SIZE {
            let k = r * CROP_SIZE + c;
            let l = map
                .geometry
                .index(CropInput::map_cell(center, r, c))
                .map_or(0.0, |i| map.log_odds[i]);
            if l < 0.0 {
                free[k] = 1;
            } else if l > 0.0 {
                occupied[k] = 1;
            } else {
                unknown[k] = 1;
            }
        }
    }
    CropInput {
        center,
        free,
        occupied,
        unknown,
        predicted_area: predicted_area_mask(),
    }
}

/// An 80×80 raster aligned with a crop's predicted block.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub center: GridIndex,
    pub values: Vec<f64>,
}

/// Map probabilities with unknown cells replaced by predicted values.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMap {
    geometry: GridGeometry,
    prob: Vec<f64>,
    predicted: Vec<bool>,
}

impl PredictionMap {
    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.prob[i]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.prob
    }

    pub fn is_predicted(&self, i: usize) -> bool {
        self.predicted[i]
    }

    pub fn predicted_count(&self) -> usize {
        self.predicted.iter().filter(|&&p| p).count()
    }

    /// Raycasting threshold: above 0.5 is an obstacle.
    pub fn blocks(&self, i: usize) -> bool {
        self.prob[i] > 0.5
    }
}

/// Per-cell prediction variance, zero wherever nothing was predicted.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceMap {
    geometry: GridGeometry,
    var: Vec<f64>,
}

impl VarianceMap {
    pub fn zeros(geometry: GridGeometry) -> Self {
        Self {
            geometry,
            var: vec![0.0; geometry.len()],
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.var[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.var
    }

    pub fn set(&mut self, c: GridIndex, v: f64) {
        if let Some(i) = self.geometry.index(c) {
            self.var[i] = v;
        }
    }
}

/// Visits every (map index, patch value) pair where the map cell is
/// unknown and covered by the patch, in patch order (later patches win).
fn for_each_unknown_covered(map: &OccupancyGrid, patches: &[Patch], mut f: impl FnMut(usize, f64)) {
    for patch in patches {
        debug_assert_eq!(patch.values.len(), PREDICT_SIZE * PREDICT_SIZE);
        for r in 0..PREDICT_SIZE {
            for c in 0..PREDICT_SIZE {
                let cell = CropInput::predicted_cell(patch.center, r, c);
                if let Some(i) = map.geometry.index(cell) {
                    if map.is_unknown(i) {
                        f(i, patch.values[r * PREDICT_SIZE + c]);
                    }
                }
            }
        }
    }
}

/// Replaces unknown map cells covered by a patch with its (clamped)
/// probability. Known cells keep the map's own probability.
pub fn compose_prediction_map(map: &OccupancyGrid, patches: &[Patch]) -> PredictionMap {
    let geometry = map.geometry;
    let mut prob: Vec<f64> = (0..geometry.len()).map(|i| map.probability(i)).collect();
    let mut predicted = vec![false; geometry.len()];
    let (lo, hi) = PREDICTION_CLAMP;
    for_each_unknown_covered(map, patches, |i, v| {
        prob[i] = v.clamp(lo, hi);
        predicted[i] = true;
    });
    PredictionMap {
        geometry,
        prob,
        predicted,
    }
}

/// Variance counterpart of [`compose_prediction_map`], same write rule.
pub fn compose_variance_map(map: &OccupancyGrid, patches: &[Patch]) -> VarianceMap {
    let mut out = VarianceMap::zeros(map.geometry);
    for_each_unknown_covered(map, patches, |i, v| out.var[i] = v.max(0.0));
    out
}
