//! Strict TOML run configuration.

use std::f64::consts::PI;

use parametrix_core::flow::Orientation;
use parametrix_core::parametrix::KernelQuadrature;
use parametrix_core::solver::{ForcingSpec, InitSpec, SolverConfig};
use parametrix_core::Grid;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: GridSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSection>,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    /// Period; defaults to 2π.
    #[serde(rename = "L", default = "two_pi")]
    pub l: f64,
}

fn two_pi() -> f64 {
    2.0 * PI
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub nu: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
    #[serde(default = "one")]
    pub snapshot_every: usize,
    pub init: InitSpec,
    pub forcing: ForcingSpec,
}

fn one() -> usize {
    1
}

/// Experiment knobs. Which ones a command needs is checked when it runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    /// Midpoint nodes of the time quadratures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_list: Option<Vec<usize>>,
    /// Slice count and slice index of a single Duhamel evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Flow start time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// Evaluation time (Duhamel) or flow end time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_ode: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_list: Option<Vec<f64>>,
    /// Fields in the projector battery of `op-suite`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<KernelQuadrature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<Orientation>,
    /// Adds the `R2_zero_order` column to the remainder table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2_zero_order: Option<bool>,
    /// `solve` writes snapshot files unless this is false.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub write_trajectory: Option<bool>,
}

pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_M: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("missing {0}")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        Grid::new(self.grid.d, self.grid.n, self.grid.l).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn solver(&self) -> Result<&SolverSection, ConfigError> {
        self.solver.as_ref().ok_or(ConfigError::Missing("[solver] section"))
    }

    pub fn solver_config(&self) -> Result<SolverConfig, ConfigError> {
        let s = self.solver()?;
        Ok(SolverConfig::new(s.nu, s.t_final, s.dt).with_snapshot_every(s.snapshot_every))
    }

    pub fn epsilon(&self) -> Result<f64, ConfigError> {
        let eps = self.experiment.epsilon.unwrap_or(DEFAULT_EPSILON);
        if !(eps > 0.0 && eps < 1.0) {
            return Err(ConfigError::Invalid(format!("epsilon must lie in (0, 1), got {eps}")));
        }
        Ok(eps)
    }

    pub fn m(&self) -> usize {
        self.experiment.m.unwrap_or(DEFAULT_M)
    }

    /// Replaces the experiment seed and the seeds of random data.
    pub fn override_seed(&mut self, seed: u64) {
        self.experiment.seed = Some(seed);
        if let Some(s) = self.solver.as_mut() {
            if let InitSpec::Random { seed: ref mut s0, .. } = s.init {
                *s0 = seed;
            }
            if let ForcingSpec::Random { seed: ref mut s1, .. } = s.forcing {
                *s1 = seed.wrapping_add(1);
            }
        }
    }
}

pub fn require<T: Clone>(value: &Option<T>, name: &'static str) -> Result<T, ConfigError> {
    value.clone().ok_or(ConfigError::Missing(name))
}

/// Parses `2,4,8` into a list of slice counts.
pub fn parse_n_list(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|e| format!("bad entry {s:?} in n-list: {e}")))
        .collect()
}
