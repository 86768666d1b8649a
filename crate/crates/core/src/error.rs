use thiserror::Error;

use crate::harness::ConfigError;
use crate::prediction::PredictError;
use crate::world::WorldError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("position ({x:.3}, {y:.3}) lies outside the grid")]
    OutsideGrid { x: f64, y: f64 },

    #[error("cell ({x}, {y}) is not free")]
    NotFree { x: i32, y: i32 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("no viewpoint candidates to evaluate")]
    NoCandidates,

    #[error(transparent)]
    World(#[from] WorldError),

    #[error(transparent)]
    Predict(#[from] PredictError),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
