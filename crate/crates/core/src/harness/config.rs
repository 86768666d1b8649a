//! Flat `key = value` experiment configuration.
//!
//! One setting per line; `#` starts a comment. Unknown keys are errors.
//! See the README for the key list.

use std::path::{Path, PathBuf};

use crate::information::{Metric, PredictedOdds};
use crate::par::Exec;
use crate::planning::ExplorationConfig;
use crate::world::WorldGenParams;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A world given by generator seed or by file.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub enum WorldSpec {
    Generated(u64),
    File(PathBuf),
}

impl WorldSpec {
    /// Short label used in file names and tables.
    pub fn label(&self) -> String {
        match self {
            WorldSpec::Generated(s) => format!("gen{s}"),
            WorldSpec::File(p) => p
                .file_stem()
                .map_or_else(|| "world".into(), |s| s.to_string_lossy().replace([' ', ','], "_")),
        }
    }

    fn parse(s: &str, base: &Path) -> Result<Self, String> {
        if let Some(seed) = s.strip_prefix("gen:") {
            return seed
                .trim()
                .parse()
                .map(WorldSpec::Generated)
                .map_err(|e| format!("generator seed {seed:?}: {e}"));
        }
        let p = Path::new(s);
        Ok(WorldSpec::File(if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub enum PredictorSpec {
    Inpaint,
    Bridge(String),
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ExperimentConfig {
    pub worlds: Vec<WorldSpec>,
    pub metrics: Vec<Metric>,
    pub trials_per_cell: usize,
    pub base_seed: u64,
    pub world_gen: WorldGenParams,
    /// Template for every trial; `metric`, `seed` and `start` are set per
    /// trial.
    pub exploration: ExplorationConfig,
    pub predictor: PredictorSpec,
    pub p_wall: f64,
    pub threads: Option<usize>,
    pub curve_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            worlds: vec![WorldSpec::Generated(1)],
            metrics: Metric::ALL.to_vec(),
            trials_per_cell: 10,
            base_seed: 0,
            world_gen: WorldGenParams::default(),
            exploration: ExplorationConfig::default(),
            predictor: PredictorSpec::Inpaint,
            p_wall: 0.7,
            threads: None,
            curve_points: 101,
        }
    }
}

fn list<T>(v: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| e.to_string())
}

fn boolean(v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

impl ExperimentConfig {
    /// Relative world paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax { line });
            };
            let (key, value) = (key.trim(), value.trim());
            c.set(key, value, base).map_err(|message| match message {
                SetError::Unknown => ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                },
                SetError::Value(message) => ConfigError::Value {
                    line,
                    key: key.to_string(),
                    message,
                },
            })?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn set(&mut self, key: &str, v: &str, base: &Path) -> Result<(), SetError> {
        let e = &mut self.exploration;
        match key {
            "worlds" => self.worlds = list(v, |s| WorldSpec::parse(s, base))?,
            "metrics" => self.metrics = list(v, |s| s.parse::<Metric>().map_err(|e| e.to_string()))?,
            "trials" => self.trials_per_cell = num(v)?,
            "base_seed" => self.base_seed = num(v)?,
            "world_size" => {
                let s: usize = num(v)?;
                let rooms = self.world_gen.rooms_min;
                self.world_gen = WorldGenParams {
                    rooms_min: rooms,
                    rooms_max: self.world_gen.rooms_max,
                    ..WorldGenParams::sized(s, rooms)
                };
            }
            "world_rooms" => {
                let r: usize = num(v)?;
                self.world_gen.rooms_min = r;
                self.world_gen.rooms_max = r;
            }
            "world_corridor" => self.world_gen.corridor_width = num(v)?,
            "max_range" => e.sensor.max_range = num(v)?,
            "fov_deg" => e.sensor.fov = num::<f64>(v)?.to_radians(),
            "beam_count" => e.sensor.beam_count = num(v)?,
            "delta_occ" => e.ism.delta_occ = num(v)?,
            "delta_free" => e.ism.delta_free = num(v)?,
            "fsmi_h" => e.fsmi.h = num(v)?,
            "fsmi_delta_occ" => e.fsmi.delta_occ = num(v)?,
            "fsmi_delta_free" => e.fsmi.delta_free = num(v)?,
            "lambda" => e.utility.lambda = num(v)?,
            "min_frontier_size" => e.frontier.min_size = num(v)?,
            "ring_radii" => e.frontier.ring_radii = list(v, num)?,
            "per_ring" => e.frontier.per_ring = num(v)?,
            "n_samples" => e.n_samples = num(v)?,
            "step_budget" => e.step_budget = num(v)?,
            "move_stride" => e.move_stride = num(v)?,
            "stuck_limit" => e.stuck_limit = num(v)?,
            "double_count" => e.metric_options.double_count = boolean(v)?,
            "predicted_odds" => {
                e.metric_options.predicted_odds = match v {
                    "prediction" => PredictedOdds::Prediction,
                    "current" => PredictedOdds::Current,
                    _ => return Err(SetError::Value(format!("expected prediction or current, got {v:?}"))),
                }
            }
            "parallel" => e.exec = if boolean(v)? { Exec::Parallel } else { Exec::Sequential },
            "predictor" => {
                self.predictor = match v {
                    "inpaint" => PredictorSpec::Inpaint,
                    "bridge" => PredictorSpec::Bridge(String::new()),
                    _ => return Err(SetError::Value(format!("expected inpaint or bridge, got {v:?}"))),
                }
            }
            "bridge_cmd" => self.predictor = PredictorSpec::Bridge(v.to_string()),
            "p_wall" => self.p_wall = num(v)?,
            "threads" => self.threads = Some(num(v)?),
            "curve_points" => self.curve_points = num(v)?,
            _ => return Err(SetError::Unknown),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.worlds.is_empty() {
            return bad("worlds must not be empty".into());
        }
        if self.metrics.is_empty() {
            return bad("metrics must not be empty".into());
        }
        if self.trials_per_cell == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.curve_points < 2 {
            return bad("curve_points must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.p_wall) {
            return bad(format!("p_wall must lie in [0, 1], got {}", self.p_wall));
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if self.predictor == PredictorSpec::Bridge(String::new()) {
            return bad("predictor = bridge needs bridge_cmd".into());
        }
        let mut labels: Vec<String> = self.worlds.iter().map(WorldSpec::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return bad("world labels must be distinct".into());
        }
        self.exploration
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

enum SetError {
    Unknown,
    Value(String),
}

impl From<String> for SetError {
    fn from(s: String) -> Self {
        SetError::Value(s)
    }
}

/// Worker cap from `EXPLORE_THREADS`, combined with a configured cap (the
/// smaller wins).
pub fn effective_threads(configured: Option<usize>) -> Option<usize> {
    let env = std::env::var("EXPLORE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    match (configured, env) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_keys() {
        let text = "\
# demo
worlds = gen:1, gen:2, maps/office.pgm
metrics = In, iv , PIm
trials = 3
base_seed = 42
world_size = 80
world_rooms = 4
max_range = 4.0
fov_deg = 120
beam_count = 61
lambda = 0.1   # cheaper travel
ring_radii = 0.5, 1.0
per_ring = 8
n_samples = 5
step_budget = 50
double_count = true
predicted_odds = current
parallel = false
p_wall = 0.6
threads = 2
curve_points = 11
";
        let c = ExperimentConfig::parse(text, Path::new("/cfg")).unwrap();
        assert_eq!(
            c.worlds,
            vec![
                WorldSpec::Generated(1),
                WorldSpec::Generated(2),
                WorldSpec::File("/cfg/maps/office.pgm".into())
            ]
        );
        assert_eq!(c.worlds[2].label(), "office");
        assert_eq!(c.metrics, vec![Metric::In, Metric::Iv, Metric::PIm]);
        assert_eq!((c.trials_per_cell, c.base_seed), (3, 42));
        assert_eq!(
            (c.world_gen.width, c.world_gen.rooms_min, c.world_gen.rooms_max),
            (80, 4, 4)
        );
        assert!((c.exploration.sensor.fov - 120f64.to_radians()).abs() < 1e-15);
        assert_eq!(c.exploration.sensor.beam_count, 61);
        assert_eq!(c.exploration.utility.lambda, 0.1);
        assert_eq!(c.exploration.frontier.ring_radii, vec![0.5, 1.0]);
        assert!(c.exploration.metric_options.double_count);
        assert_eq!(c.exploration.metric_options.predicted_odds, PredictedOdds::Current);
        assert_eq!(c.exploration.exec, Exec::Sequential);
        assert_eq!(c.threads, Some(2));
        assert_eq!(c.curve_points, 11);
    }

    #[test]
    fn errors_name_the_line() {
        let p = Path::new(".");
        assert!(matches!(
            ExperimentConfig::parse("trials 3", p),
            Err(ConfigError::Syntax { line: 1 })
        ));
        assert!(matches!(
            ExperimentConfig::parse("\nfoo = 1", p),
            Err(ConfigError::UnknownKey { line: 2, .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("trials = x", p),
            Err(ConfigError::Value { line: 1, .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("metrics = Ix", p),
            Err(ConfigError::Value { .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("trials = 0", p),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("metrics =", p),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("predictor = bridge", p),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("worlds = gen:1, gen:1", p),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("lambda = -2", p),
            Err(ConfigError::Invalid(_))
        ));
        let c = ExperimentConfig::parse("bridge_cmd = python3 serve.py --ckpt m.pt", p).unwrap();
        assert_eq!(
            c.predictor,
            PredictorSpec::Bridge("python3 serve.py --ckpt m.pt".into())
        );
    }
}
