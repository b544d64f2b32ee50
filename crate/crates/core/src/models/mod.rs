//! Generative experiment models: priors, outcome samplers, likelihoods and design spaces.
//!
//! Parameters are handled as flat `f64` slices whose layout is fixed per model
//! (see [`Model::theta_labels`]); contrastive sets of many draws are stored
//! contiguously in a [`ThetaSet`].

mod ces;
mod lingauss;
mod prey;
mod source;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ces::{CesModel, EtaParams};
pub use lingauss::{eig_closed_form_lingauss, eig_closed_form_lingauss_sequence, LinGaussModel};
pub use prey::{binomial_log_pmf, integrate_prey_ode, PreyModel, HORIZON_HOURS, MAX_POPULATION, RK4_STEPS};
pub use source::SourceModel;

use crate::special::logit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("invalid outcome: {0}")]
    InvalidOutcome(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("unknown model id {0:?} (expected source, source1d, ces, prey or lingauss)")]
    UnknownModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    Source,
    Source1d,
    Ces,
    Prey,
    #[serde(rename = "lingauss")]
    LinGauss,
}

impl ModelId {
    pub const ALL: [ModelId; 5] = [
        ModelId::Source,
        ModelId::Source1d,
        ModelId::Ces,
        ModelId::Prey,
        ModelId::LinGauss,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Source => "source",
            ModelId::Source1d => "source1d",
            ModelId::Ces => "ces",
            ModelId::Prey => "prey",
            ModelId::LinGauss => "lingauss",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ModelError::UnknownModel(s.to_string()))
    }
}

/// An experimental design: a point in a box, or an index into an enumerable set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Design {
    Continuous(Vec<f64>),
    Discrete(usize),
}

impl Design {
    pub fn as_continuous(&self) -> Option<&[f64]> {
        match self {
            Design::Continuous(v) => Some(v),
            Design::Discrete(_) => None,
        }
    }

    pub fn as_discrete(&self) -> Option<usize> {
        match self {
            Design::Discrete(i) => Some(*i),
            Design::Continuous(_) => None,
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Design::Discrete(i) => write!(f, "{i}"),
            Design::Continuous(v) => {
                let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
                write!(f, "{}", parts.join(";"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DesignSpace {
    /// Axis-aligned box `[lower_i, upper_i]`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Integers `first..=last`.
    Indices { first: usize, last: usize },
}

impl DesignSpace {
    pub fn contains(&self, design: &Design) -> bool {
        match (self, design) {
            (DesignSpace::Box { lower, upper }, Design::Continuous(x)) => {
                x.len() == lower.len()
                    && x.iter()
                        .zip(lower.iter().zip(upper))
                        .all(|(v, (lo, hi))| v.is_finite() && *v >= *lo && *v <= *hi)
            }
            (DesignSpace::Indices { first, last }, Design::Discrete(i)) => i >= first && i <= last,
            _ => false,
        }
    }

    /// Number of action dimensions (box) or number of choices (indices).
    pub fn action_dim(&self) -> usize {
        match self {
            DesignSpace::Box { lower, .. } => lower.len(),
            DesignSpace::Indices { first, last } => last - first + 1,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, DesignSpace::Indices { .. })
    }
}

/// `n` parameter draws of dimension `dim`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSet {
    dim: usize,
    values: Vec<f64>,
}

impl ThetaSet {
    pub fn new(dim: usize) -> Self {
        Self { dim, values: Vec::new() }
    }

    pub fn from_rows(dim: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len() % dim, 0);
        Self { dim, values }
    }

    pub fn push(&mut self, theta: &[f64]) {
        assert_eq!(theta.len(), self.dim);
        self.values.extend_from_slice(theta);
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Source(SourceModel),
    Ces(CesModel),
    Prey(PreyModel),
    LinGauss(LinGaussModel),
}

/// A generative experiment model with its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    id: ModelId,
    kind: Kind,
}

impl Model {
    pub fn new(id: ModelId) -> Self {
        let kind = match id {
            ModelId::Source => Kind::Source(SourceModel::two_sources_2d()),
            ModelId::Source1d => Kind::Source(SourceModel::single_source_1d()),
            ModelId::Ces => Kind::Ces(CesModel::default()),
            ModelId::Prey => Kind::Prey(PreyModel::default()),
            ModelId::LinGauss => Kind::LinGauss(LinGaussModel::default()),
        };
        Self { id, kind }
    }

    pub fn lingauss(model: LinGaussModel) -> Self {
        Self {
            id: ModelId::LinGauss,
            kind: Kind::LinGauss(model),
        }
    }

    pub fn id(&self) -> ModelId {
        self.id
    }

    pub fn source(&self) -> Option<&SourceModel> {
        match &self.kind {
            Kind::Source(s) => Some(s),
            _ => None,
        }
    }

    pub fn ces(&self) -> Option<&CesModel> {
        match &self.kind {
            Kind::Ces(c) => Some(c),
            _ => None,
        }
    }

    pub fn prey(&self) -> Option<&PreyModel> {
        match &self.kind {
            Kind::Prey(p) => Some(p),
            _ => None,
        }
    }

    pub fn lingauss_params(&self) -> Option<&LinGaussModel> {
        match &self.kind {
            Kind::LinGauss(l) => Some(l),
            _ => None,
        }
    }

    pub fn theta_dim(&self) -> usize {
        match &self.kind {
            Kind::Source(s) => s.theta_dim(),
            Kind::Ces(_) => CesModel::THETA_DIM,
            Kind::Prey(_) => PreyModel::THETA_DIM,
            Kind::LinGauss(_) => 1,
        }
    }

    /// Human-readable coordinate names for a parameter vector.
    pub fn theta_labels(&self) -> Vec<String> {
        match &self.kind {
            Kind::Source(s) => {
                let axes = ["x", "y", "z"];
                (0..s.k)
                    .flat_map(|i| (0..s.dim).map(move |j| format!("theta{}_{}", i + 1, axes[j.min(2)])))
                    .collect()
            }
            Kind::Ces(_) => ["rho", "alpha1", "alpha2", "alpha3", "u"].map(String::from).to_vec(),
            Kind::Prey(_) => ["attack_rate", "handling_time"].map(String::from).to_vec(),
            Kind::LinGauss(_) => vec!["slope".to_string()],
        }
    }

    pub fn design_space(&self) -> DesignSpace {
        match &self.kind {
            Kind::Source(s) => DesignSpace::Box {
                lower: vec![-s.bound; s.dim],
                upper: vec![s.bound; s.dim],
            },
            Kind::Ces(c) => DesignSpace::Box {
                lower: vec![0.0; 6],
                upper: vec![c.upper; 6],
            },
            Kind::Prey(_) => DesignSpace::Indices {
                first: 1,
                last: MAX_POPULATION,
            },
            Kind::LinGauss(l) => DesignSpace::Box {
                lower: vec![-l.bound],
                upper: vec![l.bound],
            },
        }
    }

    pub fn validate_design(&self, design: &Design) -> Result<(), ModelError> {
        if self.design_space().contains(design) {
            Ok(())
        } else {
            Err(ModelError::InvalidDesign(format!(
                "{design:?} is outside the {} design space {:?}",
                self.id,
                self.design_space()
            )))
        }
    }

    /// Human-readable support of the outcome for a given design.
    pub fn outcome_support(&self, design: &Design) -> String {
        match &self.kind {
            Kind::Source(_) | Kind::LinGauss(_) => "any finite real".to_string(),
            Kind::Ces(c) => format!("[{}, {}]", c.eps, 1.0 - c.eps),
            Kind::Prey(_) => format!("integers in [0, {}]", design.as_discrete().unwrap_or(0)),
        }
    }

    pub fn validate_outcome(&self, design: &Design, y: f64) -> Result<(), ModelError> {
        let ok = y.is_finite()
            && match &self.kind {
                Kind::Source(_) | Kind::LinGauss(_) => true,
                Kind::Ces(c) => y >= c.eps && y <= 1.0 - c.eps,
                Kind::Prey(_) => {
                    let n0 = design.as_discrete().unwrap_or(0) as f64;
                    y.fract() == 0.0 && y >= 0.0 && y <= n0
                }
            };
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidOutcome(format!(
                "outcome {y} is outside the support {} for design {design}",
                self.outcome_support(design)
            )))
        }
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.kind {
            Kind::Source(s) => s.sample_prior(rng),
            Kind::Ces(c) => c.sample_prior(rng),
            Kind::Prey(p) => p.sample_prior(rng),
            Kind::LinGauss(l) => l.sample_prior(rng),
        }
    }

    pub fn sample_prior_set<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> ThetaSet {
        let mut set = ThetaSet::new(self.theta_dim());
        for _ in 0..n {
            set.push(&self.sample_prior(rng));
        }
        set
    }

    /// `log p(y | θ, d)`. Designs and outcomes are validated first.
    pub fn log_likelihood(&self, theta: &[f64], design: &Design, y: f64) -> Result<f64, ModelError> {
        self.validate_design(design)?;
        self.validate_outcome(design, y)?;
        self.log_likelihood_unchecked(theta, design, y)
    }

    /// `log p(y | θ, d)` assuming `design` and `y` were already validated.
    pub fn log_likelihood_unchecked(&self, theta: &[f64], design: &Design, y: f64) -> Result<f64, ModelError> {
        Ok(match (&self.kind, design) {
            (Kind::Source(s), Design::Continuous(d)) => s.log_likelihood(theta, d, y),
            (Kind::Ces(c), Design::Continuous(d)) => c.log_likelihood(theta, d, y),
            (Kind::Prey(p), Design::Discrete(n0)) => p.log_likelihood(theta, *n0, y as usize)?,
            (Kind::LinGauss(l), Design::Continuous(d)) => l.log_likelihood(theta, d[0], y),
            _ => return Err(ModelError::InvalidDesign(format!("{design:?} has the wrong kind for {}", self.id))),
        })
    }

    /// Writes `log p(y | θ_l, d)` for every row of `thetas` into `out`.
    pub fn log_likelihoods(&self, thetas: &ThetaSet, design: &Design, y: f64, out: &mut [f64]) -> Result<(), ModelError> {
        debug_assert_eq!(out.len(), thetas.len());
        for (o, theta) in out.iter_mut().zip(thetas.iter()) {
            *o = self.log_likelihood_unchecked(theta, design, y)?;
        }
        Ok(())
    }

    pub fn sample_outcome<R: Rng + ?Sized>(&self, theta: &[f64], design: &Design, rng: &mut R) -> Result<f64, ModelError> {
        self.validate_design(design)?;
        Ok(match (&self.kind, design) {
            (Kind::Source(s), Design::Continuous(d)) => s.sample_outcome(theta, d, rng),
            (Kind::Ces(c), Design::Continuous(d)) => c.sample_outcome(theta, d, rng),
            (Kind::Prey(p), Design::Discrete(n0)) => p.sample_outcome(theta, *n0, rng)? as f64,
            (Kind::LinGauss(l), Design::Continuous(d)) => l.sample_outcome(theta, d[0], rng),
            _ => unreachable!("validate_design checks the design kind"),
        })
    }

    /// Normalized network input for one `(design, outcome)` pair.
    pub fn features(&self, design: &Design, y: f64) -> Vec<f64> {
        match (&self.kind, design) {
            (Kind::Source(s), Design::Continuous(d)) => {
                let mut f: Vec<f64> = d.iter().map(|x| x / s.bound).collect();
                f.push(y / 4.0);
                f
            }
            (Kind::Ces(c), Design::Continuous(d)) => {
                let mut f: Vec<f64> = d.iter().map(|x| x / c.upper).collect();
                f.push(y);
                f.push(logit(y.clamp(c.eps, 1.0 - c.eps)) / 16.0);
                f
            }
            (Kind::Prey(_), Design::Discrete(n0)) => {
                let n = *n0 as f64;
                vec![n / MAX_POPULATION as f64, y / n, y / MAX_POPULATION as f64]
            }
            (Kind::LinGauss(l), Design::Continuous(d)) => vec![d[0] / l.bound, y / l.bound],
            _ => panic!("design kind does not match model {}", self.id),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match &self.kind {
            Kind::Source(s) => s.dim + 1,
            Kind::Ces(_) => 8,
            Kind::Prey(_) => 3,
            Kind::LinGauss(_) => 2,
        }
    }
}
