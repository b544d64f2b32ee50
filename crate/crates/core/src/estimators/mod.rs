//! Contrastive information bounds and their helpers.

mod bounds;
mod contrastive;
mod oracle;
mod snis;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{Design, Model, ModelError};
use crate::rng::StreamRng;
use crate::sedmdp::EnvError;

pub use bounds::{pce, sequential_bounds, snmc, spce, BoundConfig, FixedDesignPolicy, RolloutTrace, SequentialBounds};
pub use contrastive::{g_upper_value, g_value, LogContrastiveLikelihoods};
pub use oracle::{design_grid, eig_1d_oracle, grid_search_optimal_design_1d, OracleGrid};
pub use snis::{effective_sample_size, posterior_snis, WeightedSamples};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("rollout {rollout}, step {step}: policy proposed {design}, outside the design space")]
    OutOfBounds { rollout: usize, step: usize, design: String },
    #[error("rollout {rollout}, step {step}: {message}")]
    Policy { rollout: usize, step: usize, message: String },
    #[error("rollout {rollout}: {source}")]
    Env { rollout: usize, source: EnvError },
    #[error("invalid estimator setting: {0}")]
    InvalidSetting(String),
    #[error("quadrature grid too small: {0}")]
    GridTooSmall(String),
    #[error("all importance weights vanish (every log weight is -inf or NaN)")]
    DegenerateWeights,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct PolicyError(pub String);

impl From<ModelError> for PolicyError {
    fn from(e: ModelError) -> Self {
        PolicyError(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub contrastive: usize,
    pub horizon: usize,
    pub kind: BoundKind,
}

/// Sample mean and `std / sqrt(n)` (unbiased variance). Summed in index order.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let var = ss / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Ordered `(d_t, y_t)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    designs: Vec<Design>,
    outcomes: Vec<f64>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, design: Design, outcome: f64) {
        self.designs.push(design);
        self.outcomes.push(outcome);
    }

    pub fn len(&self) -> usize {
        self.designs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }

    pub fn designs(&self) -> &[Design] {
        &self.designs
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn last(&self) -> Option<(&Design, f64)> {
        self.designs.last().zip(self.outcomes.last().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Design, f64)> + '_ {
        self.designs.iter().zip(self.outcomes.iter().copied())
    }

    /// First `t` pairs.
    pub fn prefix(&self, t: usize) -> History {
        History {
            designs: self.designs[..t].to_vec(),
            outcomes: self.outcomes[..t].to_vec(),
        }
    }
}

/// Anything that maps a history to the next design.
///
/// `begin_rollout` is called before every rollout so stateful policies can
/// drop cached summaries; `propose` then sees the history grow by one pair
/// per call.
pub trait DesignPolicy {
    fn name(&self) -> String;

    fn begin_rollout(&mut self) {}

    fn propose(&mut self, model: &Model, history: &History, rng: &mut StreamRng) -> Result<Design, PolicyError>;
}

impl<P: DesignPolicy + ?Sized> DesignPolicy for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn begin_rollout(&mut self) {
        (**self).begin_rollout()
    }

    fn propose(&mut self, model: &Model, history: &History, rng: &mut StreamRng) -> Result<Design, PolicyError> {
        (**self).propose(model, history, rng)
    }
}
