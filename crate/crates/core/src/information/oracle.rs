//! Reference integrators for single-beam mutual information.
//!
//! Both integrate over the measured range `z` numerically, sub-dividing
//! every cell interval into steps no longer than `z_step`. Neither uses the
//! prefix sums of the fast path: for each sample `z` they locate the cell
//! containing it, mix the per-hypothesis measurement densities, and apply
//! the inverse sensor model to every cell of the beam.
//!
//! The range model: under hypothesis `e_k` (first occupied cell `k`, or
//! `k = 0` when all cells are free) the reading falls in each cell interval
//! `m ∈ [k−H, k+H]` with probability `1/(2H+1)`, uniformly within the
//! interval. Mass that lands outside the beam's cells carries no update.

use crate::error::{Error, Result};
use crate::information::{f_term, odds, FsmiParams};
use crate::sensing::BeamTrace;

fn check(trace: &BeamTrace, o: &[f64], z_step: f64) -> Result<()> {
    if trace.len() != o.len() {
        return Err(Error::InvalidParam(format!(
            "{} cells but {} probabilities",
            trace.len(),
            o.len()
        )));
    }
    if !trace.is_empty() && trace.boundaries.len() != trace.len() + 1 {
        return Err(Error::InvalidParam("trace boundaries must number n + 1".into()));
    }
    if !(z_step > 0.0) {
        return Err(Error::InvalidParam(format!("z_step must be positive, got {z_step}")));
    }
    Ok(())
}

/// Index (0-based) of the cell interval containing `z`.
fn cell_containing(boundaries: &[f64], z: f64) -> usize {
    boundaries.partition_point(|&b| b <= z) - 1
}

/// `P(e_k)` by direct products, independently of the fast path.
fn hypothesis_probabilities(o: &[f64]) -> Vec<f64> {
    let n = o.len();
    let mut e = vec![0.0; n + 1];
    for k in 1..=n {
        let mut p = o[k - 1];
        for &oi in &o[..k - 1] {
            p *= 1.0 - oi;
        }
        e[k] = p;
    }
    e[0] = o.iter().map(|&oi| 1.0 - oi).product();
    e
}

/// Midpoint sums over sub-steps of each cell interval of
/// `density(z, m) · integrand(m)`, where `m` is the 1-based cell holding `z`.
fn integrate(
    trace: &BeamTrace,
    z_step: f64,
    density: impl Fn(f64, usize) -> f64,
    integrand: impl Fn(usize) -> f64,
) -> f64 {
    let b = &trace.boundaries;
    let mut total = 0.0;
    for m in 0..trace.len() {
        let (lo, hi) = (b[m], b[m + 1]);
        let steps = ((hi - lo) / z_step).ceil().max(1.0) as usize;
        let dz = (hi - lo) / steps as f64;
        for s in 0..steps {
            let z = lo + (s as f64 + 0.5) * dz;
            let cell = cell_containing(b, z) + 1;
            let p = density(z, cell);
            if p != 0.0 {
                total += p * integrand(cell) * dz;
            }
        }
    }
    total
}

/// Mixture density `P(z) = Σ_k P(e_k) P(z | e_k)` at a point inside cell `m`.
fn mixture_density(trace: &BeamTrace, e: &[f64], h: usize, z: f64, m: usize) -> f64 {
    let b = &trace.boundaries;
    let width = b[m] - b[m - 1];
    debug_assert!(z >= b[m - 1] && z <= b[m]);
    let per_interval = 1.0 / ((2 * h + 1) as f64 * width);
    e.iter()
        .enumerate()
        .filter(|(k, _)| k.abs_diff(m) <= h)
        .map(|(_, &pk)| pk * per_interval)
        .sum()
}

/// Odds multiplier the inverse sensor model applies to cell `j` (1-based)
/// for a reading in cell `m`.
fn ism_delta(params: &FsmiParams, j: usize, m: usize) -> f64 {
    use std::cmp::Ordering::*;
    match j.cmp(&m) {
        Less => params.delta_free,
        Equal => params.delta_occ,
        Greater => 1.0,
    }
}

/// `∫ P(z) Σ_j f(δ_j(z), r_j) dz` by direct numerical integration.
pub fn fsmi_beam_oracle(trace: &BeamTrace, o: &[f64], params: &FsmiParams, z_step: f64) -> Result<f64> {
    check(trace, o, z_step)?;
    if trace.is_empty() {
        return Ok(0.0);
    }
    let e = hypothesis_probabilities(o);
    let r: Vec<f64> = o.iter().map(|&p| odds(p)).collect();
    Ok(integrate(
        trace,
        z_step,
        |z, m| mixture_density(trace, &e, params.h, z, m),
        |m| (1..=r.len()).map(|j| f_term(ism_delta(params, j, m), r[j - 1])).sum(),
    ))
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

fn posterior(p: f64, delta: f64) -> f64 {
    let od = odds(p) * delta;
    od / (1.0 + od)
}

/// Expected drop in summed cell entropy, `Σ_j H(o_j) − E_z[Σ_j H(o_j'(z))]`,
/// where `o_j'(z)` is the inverse-sensor-model posterior. Readings outside
/// the beam leave every cell unchanged.
pub fn entropy_mi_oracle(trace: &BeamTrace, o: &[f64], params: &FsmiParams, z_step: f64) -> Result<f64> {
    check(trace, o, z_step)?;
    if trace.is_empty() {
        return Ok(0.0);
    }
    let e = hypothesis_probabilities(o);
    Ok(entropy_drop_with_density(trace, o, params, z_step, |z, m| {
        mixture_density(trace, &e, params.h, z, m)
    }))
}

pub(crate) fn entropy_drop_with_density(
    trace: &BeamTrace,
    o: &[f64],
    params: &FsmiParams,
    z_step: f64,
    density: impl Fn(f64, usize) -> f64,
) -> f64 {
    let prior: f64 = o.iter().map(|&p| binary_entropy(p)).sum();
    integrate(trace, z_step, density, |m| {
        let post: f64 = o
            .iter()
            .enumerate()
            .map(|(j, &p)| binary_entropy(posterior(p, ism_delta(params, j + 1, m))))
            .sum();
        prior - post
    })
}

/// Expected information under the same densities, written as
/// `E_z[Σ_j KL(o_j'(z) ‖ o_j)]`, plus the exact gap to the entropy oracle:
/// `KL − (H(o) − H(o')) = −(o' − o)·ln r`. Returns `(kl, gap)`.
pub fn kl_and_entropy_gap(trace: &BeamTrace, o: &[f64], params: &FsmiParams, z_step: f64) -> Result<(f64, f64)> {
    check(trace, o, z_step)?;
    if trace.is_empty() {
        return Ok((0.0, 0.0));
    }
    let e = hypothesis_probabilities(o);
    let density = |z, m| mixture_density(trace, &e, params.h, z, m);
    let kl = integrate(trace, z_step, density, |m| {
        o.iter()
            .enumerate()
            .map(|(j, &p)| {
                let q = posterior(p, ism_delta(params, j + 1, m));
                let t = |a: f64, b: f64| if a > 0.0 { a * (a / b).ln() } else { 0.0 };
                t(q, p) + t(1.0 - q, 1.0 - p)
            })
            .sum()
    });
    let gap = integrate(trace, z_step, density, |m| {
        o.iter()
            .enumerate()
            .map(|(j, &p)| -(posterior(p, ism_delta(params, j + 1, m)) - p) * odds(p).ln())
            .sum()
    });
    Ok((kl, gap))
}

/// A synthetic beam with `1..=max_cells` cells of random widths (0.02 to
/// 0.14 m, covering axis-aligned and diagonal crossings) and random cell
/// probabilities in [0.001, 0.999].
pub fn random_beam<R: rand::Rng>(rng: &mut R, max_cells: usize) -> (BeamTrace, Vec<f64>) {
    let n = rng.random_range(1..=max_cells.max(1));
    let mut boundaries = Vec::with_capacity(n + 1);
    let mut z = rng.random_range(0.0..0.1);
    boundaries.push(z);
    for _ in 0..n {
        z += rng.random_range(0.02..0.14);
        boundaries.push(z);
    }
    let cells = (0..n as i32).map(|i| crate::sensing::GridIndex::new(i, 0)).collect();
    let o = (0..n).map(|_| rng.random_range(0.001..=0.999)).collect();
    (BeamTrace { cells, boundaries }, o)
}

/// Summary of the fast-path / reference comparisons on random beams.
#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct EquivalenceReport {
    pub beams: usize,
    /// max |fast − oracle| / oracle.
    pub max_rel_error: f64,
    /// Smallest fast-path value seen (MI must be non-negative).
    pub min_mi: f64,
    /// max |Σ_k P(e_k) − 1|.
    pub max_hit_sum_error: f64,
    /// max |fsmi oracle − entropy oracle| on all-unknown beams.
    pub max_entropy_gap_unknown: f64,
    /// max |fsmi oracle − entropy oracle − characterized gap| on random beams.
    pub max_gap_residual: f64,
}

/// Integration step of the suite: a tenth of the 0.1 m cell size.
pub const SUITE_Z_STEP: f64 = 0.01;

/// Compares the fast path against both reference integrators on `beams`
/// random beams of at most 50 cells, with H cycling through 1, 2, 3.
pub fn equivalence_suite(beams: usize, seed: u64) -> Result<EquivalenceReport> {
    let mut rng = crate::seed::rng_from(&[seed, 0xF51]);
    let mut rep = EquivalenceReport {
        beams,
        min_mi: f64::INFINITY,
        ..Default::default()
    };
    for b in 0..beams {
        let (trace, o) = random_beam(&mut rng, 50);
        let params = FsmiParams::new(1 + b % 3, 3.0, 1.0 / 3.0)?;
        let odds = crate::information::hit_probabilities(&o);
        let fast = crate::information::fsmi_beam(&trace, &odds, &params);
        let reference = fsmi_beam_oracle(&trace, &o, &params, SUITE_Z_STEP)?;
        rep.max_rel_error = rep.max_rel_error.max((fast - reference).abs() / reference);
        rep.min_mi = rep.min_mi.min(fast);
        rep.max_hit_sum_error = rep.max_hit_sum_error.max((odds.e.iter().sum::<f64>() - 1.0).abs());

        let entropy = entropy_mi_oracle(&trace, &o, &params, SUITE_Z_STEP)?;
        let (_, gap) = kl_and_entropy_gap(&trace, &o, &params, SUITE_Z_STEP)?;
        rep.max_gap_residual = rep.max_gap_residual.max((reference - entropy - gap).abs());

        let unknown = vec![0.5; o.len()];
        let a = fsmi_beam_oracle(&trace, &unknown, &params, SUITE_Z_STEP)?;
        let c = entropy_mi_oracle(&trace, &unknown, &params, SUITE_Z_STEP)?;
        rep.max_entropy_gap_unknown = rep.max_entropy_gap_unknown.max((a - c).abs());
    }
    Ok(rep)
}
