//! Desk-scale autonomous exploration on 2D occupancy grids.
//!
//! The crate simulates a robot with a planar depth sensor exploring a hidden
//! floorplan. It keeps a log-odds occupancy map, detects frontiers, scores
//! candidate viewpoints with one of seven information metrics and drives the
//! robot to the frontier of highest utility. The prediction-based metrics
//! consume Monte Carlo samples of inpainted map crops, either from the
//! built-in stochastic predictor or from an external process speaking the
//! newline-delimited JSON bridge protocol.
//!
//! Module map:
//!
//! - [`world`]: ground-truth floorplans (generation, ASCII/PGM loading).
//! - [`sensing`]: poses, the grid ray walker and the simulated scanner.
//! - [`mapping`]: the occupancy grid, Bayesian updates and prediction crops.
//! - [`frontier`]: frontier detection and viewpoint sampling.
//! - [`prediction`]: predictors, ensemble mean/variance, bridge client.
//! - [`information`]: volumetric gain, uniform FSMI, variance metrics and
//!   the reference integrators used to validate them.
//! - [`planning`]: A* cost, utility, and the closed exploration loop.
//! - [`harness`]: experiment runner, config files, summaries and curves.

pub mod error;
pub mod frontier;
pub mod harness;
pub mod information;
pub mod mapping;
pub mod par;
pub mod planning;
pub mod prediction;
pub mod seed;
pub mod sensing;
pub mod world;

pub use error::{Error, Result};
pub use frontier::{Frontier, FrontierParams, Viewpoint};
pub use information::{FsmiParams, Metric};
pub use mapping::{GridGeometry, GridIndex, InverseSensorModel, OccupancyGrid};
pub use par::Exec;
pub use planning::{ExplorationConfig, TrialResult, UtilityParams};
pub use sensing::{BeamTrace, Pose2D, Scan, SensorParams};
pub use world::{WorldGenParams, WorldGrid};
