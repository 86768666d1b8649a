//! Stochastic occupancy prediction over map crops.
//!
//! A [`Predictor`] turns one [`CropInput`] into `n_s` sampled 80×80
//! probability rasters. The ensemble mean feeds the prediction map and the
//! population variance feeds the variance map.

mod bridge;
mod inpaint;

pub use bridge::{check_bridge, BridgeCheck, BridgeClient};
pub use inpaint::InpaintingPredictor;

use crate::mapping::{CropInput, GridIndex, Patch, PREDICT_SIZE};

/// Cells per sample raster.
pub const SAMPLE_LEN: usize = PREDICT_SIZE * PREDICT_SIZE;

/// Values this far outside [0, 1] are accepted (and clamped) to absorb
/// decimal round-trips on the wire.
pub const RANGE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum PredictError {
    #[error("n_samples must be at least 1")]
    NoSamples,
    #[error("bridge i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bridge closed its output")]
    Closed,
    #[error("bridge protocol: {0}")]
    Protocol(String),
    #[error("bridge reported an error for request {id}: {message}")]
    Remote { id: u64, message: String },
    #[error("bad sample shape: {0}")]
    Shape(String),
    #[error("sample value {value} outside [0, 1]")]
    OutOfRange { value: f64 },
}

/// `n_s` sampled probability rasters for the predicted block of one crop.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionEnsemble {
    pub centroid: GridIndex,
    samples: Vec<Vec<f64>>,
}

impl PredictionEnsemble {
    /// Checks shape and range. Values within [`RANGE_TOLERANCE`] of [0, 1]
    /// are clamped.
    pub fn new(centroid: GridIndex, mut samples: Vec<Vec<f64>>) -> Result<Self, PredictError> {
        if samples.is_empty() {
            return Err(PredictError::NoSamples);
        }
        for (j, s) in samples.iter_mut().enumerate() {
            if s.len() != SAMPLE_LEN {
                return Err(PredictError::Shape(format!(
                    "sample {j} has {} values, expected {SAMPLE_LEN}",
                    s.len()
                )));
            }
            for v in s.iter_mut() {
                if !(*v >= -RANGE_TOLERANCE && *v <= 1.0 + RANGE_TOLERANCE) {
                    return Err(PredictError::OutOfRange { value: *v });
                }
                *v = v.clamp(0.0, 1.0);
            }
        }
        Ok(Self { centroid, samples })
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn mean(&self) -> Vec<f64> {
        ensemble_mean(&self.samples)
    }

    pub fn variance(&self) -> Vec<f64> {
        ensemble_variance(&self.samples)
    }

    /// Mean and variance as patches for map composition.
    pub fn patches(&self) -> (Patch, Patch) {
        let mean = Patch {
            center: self.centroid,
            values: self.mean(),
        };
        let var = Patch {
            center: self.centroid,
            values: self.variance(),
        };
        (mean, var)
    }
}

/// Per-cell arithmetic mean.
pub fn ensemble_mean(samples: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    let n = samples.len() as f64;
    let mut sum = vec![0.0; first.len()];
    for s in samples {
        for (a, v) in sum.iter_mut().zip(s) {
            *a += v;
        }
    }
    sum.iter_mut().for_each(|a| *a /= n);
    sum
}

/// Per-cell population variance `E[X²] − E[X]²`, negative round-off
/// clamped to zero.
pub fn ensemble_variance(samples: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    let n = samples.len() as f64;
    let mut sum = vec![0.0; first.len()];
    let mut sq = vec![0.0; first.len()];
    for s in samples {
        for ((a, b), &v) in sum.iter_mut().zip(sq.iter_mut()).zip(s) {
            *a += v;
            *b += v * v;
        }
    }
    sum.iter()
        .zip(&sq)
        .map(|(&a, &b)| {
            let m = a / n;
            (b / n - m * m).max(0.0)
        })
        .collect()
}

/// Source of sampled predictions. Implementations must be deterministic in
/// `(crop, n_samples, seed)` whatever thread calls them.
pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;

    fn predict(&self, crop: &CropInput, n_samples: usize, seed: u64) -> Result<PredictionEnsemble, PredictError>;
}
