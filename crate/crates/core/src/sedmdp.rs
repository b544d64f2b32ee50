//! Episodic environment for sequential design.
//!
//! An episode draws `θ_0, …, θ_L` i.i.d. from the prior, simulates outcomes
//! under `θ_0` only, and tracks the log history likelihood of every draw. The
//! dense reward for step `t` is
//!
//! ```text
//! r_t = log p(y_t | θ_0, d_t) − logsumexp(ell_t) + logsumexp(ell_{t−1})
//! ```
//!
//! which telescopes to the sPCE integrand `g(θ, h_T)`. The sparse mode pays
//! `g` once at the final step. Neither mode ever evaluates a posterior.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{History, LogContrastiveLikelihoods};
use crate::models::{Design, Model, ModelError, ThetaSet};
use crate::rng::RolloutStreams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Dense,
    Sparse,
}

impl std::str::FromStr for RewardMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dense" => Ok(RewardMode::Dense),
            "sparse" => Ok(RewardMode::Sparse),
            other => Err(format!("unknown reward mode {other:?} (expected dense or sparse)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("episode is done (t = T = {0}); call reset")]
    EpisodeDone(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid environment setting: {0}")]
    InvalidSetting(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Number of contrastive draws `L`.
    pub contrastive: usize,
    /// Horizon `T`.
    pub horizon: usize,
    pub reward_mode: RewardMode,
    pub gamma: f64,
}

/// Per-step diagnostics behind a reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub log_lik_theta0: f64,
    pub log_sum_exp_now: f64,
    pub log_sum_exp_prev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub outcome: f64,
    pub reward: f64,
    pub done: bool,
    pub breakdown: RewardBreakdown,
}

/// State of one episode. Owns the raw history and the log-likelihood vector;
/// agent-side summaries are rebuilt from the history.
#[derive(Debug, Clone)]
pub struct EpisodeContext {
    model: Model,
    config: EnvConfig,
    thetas: ThetaSet,
    history: History,
    ell: LogContrastiveLikelihoods,
    log_sum_exp: f64,
    last_outcome: Option<f64>,
    scratch: Vec<f64>,
}

impl EpisodeContext {
    /// Starts an episode: `θ_0` from the `theta0` stream, `θ_1..θ_L` from the
    /// `contrastive` stream, empty history, all-zero log likelihoods.
    pub fn reset(model: &Model, config: EnvConfig, streams: &mut RolloutStreams) -> Result<Self, EnvError> {
        let thetas = {
            let mut set = ThetaSet::new(model.theta_dim());
            set.push(&model.sample_prior(&mut streams.theta0));
            for _ in 0..config.contrastive {
                set.push(&model.sample_prior(&mut streams.contrastive));
            }
            set
        };
        Self::with_thetas(model, config, thetas)
    }

    /// Starts an episode from an explicit `θ_{0:L}` (row 0 generates outcomes).
    pub fn with_thetas(model: &Model, config: EnvConfig, thetas: ThetaSet) -> Result<Self, EnvError> {
        if config.contrastive < 1 || config.horizon < 1 {
            return Err(EnvError::InvalidSetting(format!(
                "need L >= 1 and T >= 1, got L = {}, T = {}",
                config.contrastive, config.horizon
            )));
        }
        if !(0.0..=1.0).contains(&config.gamma) {
            return Err(EnvError::InvalidSetting(format!("gamma must lie in [0, 1], got {}", config.gamma)));
        }
        if thetas.len() != config.contrastive + 1 || thetas.dim() != model.theta_dim() {
            return Err(EnvError::InvalidSetting(format!(
                "expected {} parameter rows of dimension {}",
                config.contrastive + 1,
                model.theta_dim()
            )));
        }
        let ell = LogContrastiveLikelihoods::new(thetas.len());
        let log_sum_exp = ell.log_sum_exp();
        Ok(Self {
            model: model.clone(),
            config,
            thetas,
            history: History::default(),
            ell,
            log_sum_exp,
            last_outcome: None,
            scratch: Vec::new(),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn t(&self) -> usize {
        self.history.len()
    }

    pub fn done(&self) -> bool {
        self.t() == self.config.horizon
    }

    pub fn thetas(&self) -> &ThetaSet {
        &self.thetas
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn ell(&self) -> &LogContrastiveLikelihoods {
        &self.ell
    }

    pub fn last_outcome(&self) -> Option<f64> {
        self.last_outcome
    }

    /// Current sPCE integrand `g(θ, h_t)`.
    pub fn g_lower(&self) -> f64 {
        self.ell.g_lower()
    }

    /// Current sNMC integrand.
    pub fn g_upper(&self) -> f64 {
        self.ell.g_upper()
    }

    /// Simulates `y_t ~ p(y | θ_0, d_t)` and advances the episode.
    pub fn step<R: Rng + ?Sized>(&mut self, design: &Design, outcome_rng: &mut R) -> Result<StepResult, EnvError> {
        if self.done() {
            return Err(EnvError::EpisodeDone(self.config.horizon));
        }
        self.model.validate_design(design)?;
        let y = self.model.sample_outcome(self.thetas.get(0), design, outcome_rng)?;
        self.advance(design, y)
    }

    /// Advances with an externally observed outcome (used for replays and live sessions).
    pub fn step_with_outcome(&mut self, design: &Design, y: f64) -> Result<StepResult, EnvError> {
        if self.done() {
            return Err(EnvError::EpisodeDone(self.config.horizon));
        }
        self.model.validate_design(design)?;
        self.model.validate_outcome(design, y)?;
        self.advance(design, y)
    }

    fn advance(&mut self, design: &Design, y: f64) -> Result<StepResult, EnvError> {
        let prev = self.log_sum_exp;
        self.ell.update(&self.model, &self.thetas, design, y, &mut self.scratch)?;
        let now = self.ell.log_sum_exp();
        self.log_sum_exp = now;
        let log_lik_theta0 = self.scratch[0];
        self.history.push(design.clone(), y);
        self.last_outcome = Some(y);
        let done = self.done();
        let reward = match self.config.reward_mode {
            RewardMode::Dense => log_lik_theta0 - now + prev,
            RewardMode::Sparse if done => self.ell.g_lower(),
            RewardMode::Sparse => 0.0,
        };
        Ok(StepResult {
            outcome: y,
            reward,
            done,
            breakdown: RewardBreakdown {
                log_lik_theta0,
                log_sum_exp_now: now,
                log_sum_exp_prev: prev,
            },
        })
    }
}

pub fn undiscounted_return(rewards: &[f64]) -> f64 {
    rewards.iter().sum()
}

/// `Σ_t γ^(t−1) r_t`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut factor = 1.0;
    for r in rewards {
        total += factor * r;
        factor *= gamma;
    }
    total
}
