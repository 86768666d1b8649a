//! Information metrics for a candidate sensing pose.
//!
//! | metric   | rays cast on          | accumulates                         |
//! |----------|-----------------------|-------------------------------------|
//! | `In`     | none                  | constant 1 (nearest frontier)       |
//! | `Iv`     | current map           | unknown cells crossed               |
//! | `PIv`    | thresholded prediction| cells unknown in the current map    |
//! | `Im`     | current map           | uniform FSMI                        |
//! | `PIm`    | prediction map        | uniform FSMI on predicted odds      |
//! | `PIvar1` | current map           | prediction variance                 |
//! | `PIvar2` | thresholded prediction| prediction variance                 |
//!
//! Ray-counting metrics count a cell once per evaluation even when several
//! beams cross it, unless `double_count` is set. FSMI sums beams
//! independently.

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::{OccupancyGrid, PredictionMap, VarianceMap};
use crate::sensing::{trace_beam, BeamTrace, GridGeometry, Pose2D, SensorParams};

pub mod oracle;

pub use oracle::{entropy_mi_oracle, fsmi_beam_oracle};

/// Cells above this probability stop an FSMI beam (the cell itself is kept).
pub const HARD_WALL_PROB: f64 = 0.999;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    In,
    Iv,
    Im,
    PIv,
    PIm,
    PIvar1,
    PIvar2,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::In,
        Metric::Iv,
        Metric::Im,
        Metric::PIv,
        Metric::PIm,
        Metric::PIvar1,
        Metric::PIvar2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::In => "In",
            Metric::Iv => "Iv",
            Metric::Im => "Im",
            Metric::PIv => "PIv",
            Metric::PIm => "PIm",
            Metric::PIvar1 => "PIvar1",
            Metric::PIvar2 => "PIvar2",
        }
    }

    pub fn uses_prediction(self) -> bool {
        matches!(self, Metric::PIv | Metric::PIm | Metric::PIvar1 | Metric::PIvar2)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParam(format!("unknown metric {s:?}")))
    }
}

/// Where PI_m takes the cell odds `r_j` from. Hit probabilities always come
/// from the prediction map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictedOdds {
    #[default]
    Prediction,
    Current,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FsmiParams {
    /// Half-width of the uniform range noise, in cells.
    pub h: usize,
    pub delta_occ: f64,
    pub delta_free: f64,
}

impl Default for FsmiParams {
    fn default() -> Self {
        Self {
            h: 1,
            delta_occ: 3.0,
            delta_free: 1.0 / 3.0,
        }
    }
}

impl FsmiParams {
    pub fn new(h: usize, delta_occ: f64, delta_free: f64) -> Result<Self> {
        if h == 0 {
            return Err(Error::InvalidParam("H must be at least 1".into()));
        }
        crate::mapping::InverseSensorModel::new(delta_occ, delta_free)?;
        Ok(Self {
            h,
            delta_occ,
            delta_free,
        })
    }
}

/// Information gained on one cell with prior odds `r` when its odds are
/// multiplied by `delta`: the KL divergence of the updated Bernoulli from
/// the prior, `ln((r+1)/(r+1/δ)) − ln δ/(rδ+1)` (nats).
#[inline]
pub fn f_term(delta: f64, r: f64) -> f64 {
    ((r + 1.0) / (r + 1.0 / delta)).ln() - delta.ln() / (r * delta + 1.0)
}

#[inline]
pub fn odds(p: f64) -> f64 {
    p / (1.0 - p)
}

/// Per-cell odds and first-hit probabilities of a beam.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BeamOdds {
    /// `r_j = o_j / (1 − o_j)`.
    pub r: Vec<f64>,
    /// `e[k]` for `k = 1..=n` is the probability that cell `k` is the first
    /// occupied one; `e[0]` is the probability that every cell is free.
    pub e: Vec<f64>,
}

pub fn hit_probabilities(o: &[f64]) -> BeamOdds {
    let mut e = Vec::with_capacity(o.len() + 1);
    fill_hit_probabilities(o.iter().copied(), &mut e);
    BeamOdds {
        r: o.iter().map(|&p| odds(p)).collect(),
        e,
    }
}

fn fill_hit_probabilities(o: impl Iterator<Item = f64>, e: &mut Vec<f64>) {
    e.clear();
    e.push(0.0);
    let mut all_free = 1.0;
    for p in o {
        e.push(p * all_free);
        all_free *= 1.0 - p;
    }
    e[0] = all_free;
}

/// Uniform FSMI for one beam from per-cell terms.
///
/// `C_m = f_occ[m] + Σ_{s<m} f_free[s]` and `D_j = Σ_{m≤j} C_m` (with
/// `D_j = 0` for `j ≤ 0` and `D_j = D_n` past the end); the result is
/// `Σ_k e[k]·(D_{k+H} − D_{k−H−1})/(2H+1)`. Linear in the cell count.
fn beam_mi_from_terms(f_occ: &[f64], f_free: &[f64], e: &[f64], h: usize, d: &mut Vec<f64>) -> f64 {
    let n = f_occ.len();
    if n == 0 {
        return 0.0;
    }
    d.clear();
    d.push(0.0);
    let mut free_sum = 0.0;
    let mut acc = 0.0;
    for m in 0..n {
        acc += f_occ[m] + free_sum;
        free_sum += f_free[m];
        d.push(acc);
    }
    let width = (2 * h + 1) as f64;
    let mut mi = 0.0;
    for (k, &pk) in e.iter().enumerate() {
        let hi = (k + h).min(n);
        let lo = k.saturating_sub(h + 1);
        mi += pk * (d[hi] - d[lo]) / width;
    }
    mi
}

/// Uniform FSMI of a single traced beam.
pub fn fsmi_beam(trace: &BeamTrace, odds: &BeamOdds, params: &FsmiParams) -> f64 {
    debug_assert_eq!(trace.len(), odds.r.len());
    debug_assert_eq!(odds.e.len(), odds.r.len() + 1);
    let f_occ: Vec<f64> = odds.r.iter().map(|&r| f_term(params.delta_occ, r)).collect();
    let f_free: Vec<f64> = odds.r.iter().map(|&r| f_term(params.delta_free, r)).collect();
    beam_mi_from_terms(
        &f_occ,
        &f_free,
        &odds.e,
        params.h,
        &mut Vec::with_capacity(f_occ.len() + 1),
    )
}

/// Read access to per-cell occupancy probabilities.
pub trait OccupancySource {
    fn geometry(&self) -> &GridGeometry;
    fn probability(&self, i: usize) -> f64;
}

impl OccupancySource for OccupancyGrid {
    fn geometry(&self) -> &GridGeometry {
        OccupancyGrid::geometry(self)
    }
    fn probability(&self, i: usize) -> f64 {
        OccupancyGrid::probability(self, i)
    }
}

impl OccupancySource for PredictionMap {
    fn geometry(&self) -> &GridGeometry {
        PredictionMap::geometry(self)
    }
    fn probability(&self, i: usize) -> f64 {
        PredictionMap::probability(self, i)
    }
}

/// Per-cell FSMI terms precomputed over a map snapshot, so evaluating a
/// pose only walks rays and sums table entries.
#[derive(Clone, Debug)]
pub struct FsmiField {
    geometry: GridGeometry,
    params: FsmiParams,
    hit_prob: Vec<f64>,
    f_occ: Vec<f64>,
    f_free: Vec<f64>,
}

impl FsmiField {
    /// `hits` supplies hit probabilities and hard walls, `odds` the cell
    /// odds `r_j`. For I_m both are the current map.
    pub fn new(hits: &dyn OccupancySource, odds_source: &dyn OccupancySource, params: FsmiParams) -> Self {
        let geometry = *hits.geometry();
        debug_assert_eq!(geometry, *odds_source.geometry());
        let n = geometry.len();
        let hit_prob: Vec<f64> = (0..n).map(|i| hits.probability(i)).collect();
        let r: Vec<f64> = (0..n).map(|i| odds(odds_source.probability(i))).collect();
        Self {
            geometry,
            params,
            hit_prob,
            f_occ: r.iter().map(|&r| f_term(params.delta_occ, r)).collect(),
            f_free: r.iter().map(|&r| f_term(params.delta_free, r)).collect(),
        }
    }

    pub fn from_source(source: &dyn OccupancySource, params: FsmiParams) -> Self {
        Self::new(source, source, params)
    }

    /// The cells a beam is evaluated over: cut after the first hard wall.
    pub fn trace(&self, pose: Pose2D, angle: f64, max_range: f64) -> Result<BeamTrace> {
        let mut trace = trace_beam(&self.geometry, pose.x, pose.y, angle, max_range)?;
        if let Some(w) = trace.cells.iter().position(|&c| {
            self.geometry
                .index(c)
                .is_some_and(|i| self.hit_prob[i] > HARD_WALL_PROB)
        }) {
            trace.truncate(w + 1);
        }
        Ok(trace)
    }

    /// Per-beam MI, in beam order.
    pub fn per_beam(&self, pose: Pose2D, sensor: &SensorParams) -> Result<Vec<f64>> {
        let mut scratch = Scratch::default();
        sensor
            .beam_angles(pose.yaw)
            .into_iter()
            .map(|a| {
                let trace = self.trace(pose, a, sensor.max_range)?;
                Ok(self.beam_mi(&trace, &mut scratch))
            })
            .collect()
    }

    pub fn evaluate(&self, pose: Pose2D, sensor: &SensorParams) -> Result<f64> {
        Ok(self.per_beam(pose, sensor)?.iter().sum())
    }

    fn beam_mi(&self, trace: &BeamTrace, s: &mut Scratch) -> f64 {
        s.f_occ.clear();
        s.f_free.clear();
        let mut idx = Vec::with_capacity(trace.len());
        for c in &trace.cells {
            let i = self.geometry.index(*c).expect("trace cells lie inside the grid");
            idx.push(i);
            s.f_occ.push(self.f_occ[i]);
            s.f_free.push(self.f_free[i]);
        }
        fill_hit_probabilities(idx.iter().map(|&i| self.hit_prob[i]), &mut s.e);
        beam_mi_from_terms(&s.f_occ, &s.f_free, &s.e, self.params.h, &mut s.d)
    }
}

#[derive(Default)]
struct Scratch {
    f_occ: Vec<f64>,
    f_free: Vec<f64>,
    e: Vec<f64>,
    d: Vec<f64>,
}

/// Uniform FSMI of a pose over a probability source (I_m on the current
/// map, PI_m on a prediction map with the default odds reading).
pub fn fsmi(source: &dyn OccupancySource, pose: Pose2D, sensor: &SensorParams, params: &FsmiParams) -> Result<f64> {
    FsmiField::from_source(source, *params).evaluate(pose, sensor)
}

/// Writes `beam,mi` rows for one evaluation.
pub fn write_beam_csv(path: impl AsRef<Path>, per_beam: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "beam,mi")?;
    for (i, v) in per_beam.iter().enumerate() {
        writeln!(out, "{i},{v:.12e}")?;
    }
    out.flush()?;
    Ok(())
}

fn require_free(map: &OccupancyGrid, pose: Pose2D) -> Result<()> {
    let g = map.geometry();
    let c = g.cell_of(pose.x, pose.y);
    match g.index(c) {
        None => Err(Error::OutsideGrid { x: pose.x, y: pose.y }),
        Some(i) if !map.is_free(i) => Err(Error::NotFree { x: c.x, y: c.y }),
        Some(_) => Ok(()),
    }
}

/// Walks each beam until (and including) the first blocking cell and hands
/// the crossed cells to `visit`, deduplicated across beams unless
/// `double_count` is set.
fn cast_fan(
    geom: &GridGeometry,
    pose: Pose2D,
    sensor: &SensorParams,
    blocks: impl Fn(usize) -> bool,
    double_count: bool,
    mut visit: impl FnMut(usize),
) -> Result<()> {
    let mut seen: Vec<usize> = Vec::new();
    for angle in sensor.beam_angles(pose.yaw) {
        let trace = trace_beam(geom, pose.x, pose.y, angle, sensor.max_range)?;
        for c in &trace.cells {
            let i = geom.index(*c).expect("trace cells lie inside the grid");
            if double_count {
                visit(i);
            } else {
                seen.push(i);
            }
            if blocks(i) {
                break;
            }
        }
    }
    if !double_count {
        seen.sort_unstable();
        seen.dedup();
        seen.into_iter().for_each(visit);
    }
    Ok(())
}

/// Volumetric gain: number of cells unknown in the current map that the
/// sensor fan reaches. Rays stop at occupied cells of the current map, or
/// at cells above 0.5 in `prediction` when given (PI_v).
pub fn volumetric_gain(
    map: &OccupancyGrid,
    prediction: Option<&PredictionMap>,
    pose: Pose2D,
    sensor: &SensorParams,
    double_count: bool,
) -> Result<f64> {
    require_free(map, pose)?;
    let mut count = 0usize;
    let visit = |i: usize| {
        if map.is_unknown(i) {
            count += 1;
        }
    };
    match prediction {
        None => cast_fan(
            map.geometry(),
            pose,
            sensor,
            |i| map.is_occupied(i),
            double_count,
            visit,
        )?,
        Some(p) => cast_fan(map.geometry(), pose, sensor, |i| p.blocks(i), double_count, visit)?,
    }
    Ok(count as f64)
}

/// Summed prediction variance over the cells the fan reaches. Rays are cast
/// on the current map (PI_var1) or on the thresholded prediction (PI_var2).
pub fn variance_info(
    variance: &VarianceMap,
    map: &OccupancyGrid,
    prediction: Option<&PredictionMap>,
    pose: Pose2D,
    sensor: &SensorParams,
    double_count: bool,
) -> Result<f64> {
    require_free(map, pose)?;
    let mut total = 0.0;
    let visit = |i: usize| total += variance.variance(i);
    match prediction {
        None => cast_fan(
            map.geometry(),
            pose,
            sensor,
            |i| map.is_occupied(i),
            double_count,
            visit,
        )?,
        Some(p) => cast_fan(map.geometry(), pose, sensor, |i| p.blocks(i), double_count, visit)?,
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub double_count: bool,
    pub predicted_odds: PredictedOdds,
}

/// Scores poses with one metric over a fixed map snapshot.
pub struct Evaluator<'a> {
    metric: Metric,
    map: &'a OccupancyGrid,
    prediction: Option<&'a PredictionMap>,
    variance: Option<&'a VarianceMap>,
    fsmi: Option<FsmiField>,
    sensor: SensorParams,
    options: MetricOptions,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        metric: Metric,
        map: &'a OccupancyGrid,
        prediction: Option<&'a PredictionMap>,
        variance: Option<&'a VarianceMap>,
        sensor: SensorParams,
        fsmi: FsmiParams,
        options: MetricOptions,
    ) -> Result<Self> {
        if metric.uses_prediction() && prediction.is_none() {
            return Err(Error::InvalidParam(format!("{metric} needs a prediction map")));
        }
        if matches!(metric, Metric::PIvar1 | Metric::PIvar2) && variance.is_none() {
            return Err(Error::InvalidParam(format!("{metric} needs a variance map")));
        }
        let fsmi = match metric {
            Metric::Im => Some(FsmiField::from_source(map, fsmi)),
            Metric::PIm => {
                let p = prediction.expect("checked above");
                Some(match options.predicted_odds {
                    PredictedOdds::Prediction => FsmiField::from_source(p, fsmi),
                    PredictedOdds::Current => FsmiField::new(p, map, fsmi),
                })
            }
            _ => None,
        };
        Ok(Self {
            metric,
            map,
            prediction,
            variance,
            fsmi,
            sensor,
            options,
        })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn evaluate(&self, pose: Pose2D) -> Result<f64> {
        let dc = self.options.double_count;
        match self.metric {
            Metric::In => Ok(1.0),
            Metric::Iv => volumetric_gain(self.map, None, pose, &self.sensor, dc),
            Metric::PIv => volumetric_gain(self.map, self.prediction, pose, &self.sensor, dc),
            Metric::Im | Metric::PIm => {
                require_free(self.map, pose)?;
                self.fsmi
                    .as_ref()
                    .expect("built for FSMI metrics")
                    .evaluate(pose, &self.sensor)
            }
            Metric::PIvar1 => variance_info(self.variance.expect("checked"), self.map, None, pose, &self.sensor, dc),
            Metric::PIvar2 => variance_info(
                self.variance.expect("checked"),
                self.map,
                self.prediction,
                pose,
                &self.sensor,
                dc,
            ),
        }
    }
}

/// Nearest-frontier information: always one.
pub fn info_nearest(_pose: Pose2D) -> f64 {
    1.0
}

#[cfg(test)]
mod tests;
