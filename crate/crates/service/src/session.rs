use serde::{Deserialize, Serialize};

use boed_core::agents::{Actor, Summary};
use boed_core::autodiff::CheckpointMeta;
use boed_core::estimators::{g_value, posterior_snis, History, LogContrastiveLikelihoods};
use boed_core::models::{Design, Model, ModelId, ThetaSet};
use boed_core::rng::{RolloutStreams, StreamRng};
use boed_core::trainer::hyperparameter_row;

use crate::error::ApiError;

pub const DEFAULT_PARTICLES: usize = 1000;
pub const MIN_ESS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub model: ModelId,
    pub checkpoint: String,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub n_particles: Option<usize>,
}

fn default_mode() -> Mode {
    Mode::Live
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: usize,
    pub design: Design,
    pub y: f64,
    /// Whether the server drew `y` (simulated mode).
    pub simulated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub model: ModelId,
    pub checkpoint: String,
    pub mode: Mode,
    pub seed: u64,
    pub n_particles: usize,
    pub horizon: usize,
    /// 1-based index of the pending experiment; `horizon + 1` once done.
    pub step: usize,
    pub done: bool,
    pub design: Option<Design>,
    /// Valid outcomes for the pending design.
    pub outcome_support: Option<String>,
    pub history: Vec<Observation>,
    /// Simulated mode only: sPCE integrand after each step, with the particles as contrastive set.
    pub information_gain: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorView {
    pub session_id: String,
    pub step: usize,
    pub n: usize,
    pub parameter_names: Vec<String>,
    pub thetas: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub ess: f64,
}

/// One sequential design session. Its state after `k` outcomes is a pure
/// function of the checkpoint, seed, mode and the outcomes posted.
pub struct Session {
    id: String,
    model: Model,
    checkpoint: String,
    mode: Mode,
    seed: u64,
    horizon: usize,
    actor: Actor,
    summary: Summary,
    history: History,
    simulated_flags: Vec<bool>,
    particles: ThetaSet,
    ell: LogContrastiveLikelihoods,
    /// Simulated mode: hidden θ₀, its log-likelihood and the outcome stream.
    hidden: Option<Hidden>,
    info_gain: Vec<f64>,
    pending: Option<Design>,
    policy_rng: StreamRng,
    scratch: Vec<f64>,
}

struct Hidden {
    theta: Vec<f64>,
    log_lik: f64,
    outcomes: StreamRng,
}

impl Session {
    /// Draws from the streams of rollout 0 under `seed`, the same way an
    /// evaluation rollout does: θ₀ from the θ₀ stream, the particles from
    /// the contrastive stream, outcomes from the outcome stream.
    pub fn new(id: String, request: &CreateRequest, actor: Actor, meta: &CheckpointMeta) -> Result<Self, ApiError> {
        let model = Model::new(request.model);
        let n_particles = request.n_particles.unwrap_or(DEFAULT_PARTICLES);
        if n_particles == 0 {
            return Err(ApiError::invalid_request("n_particles must be >= 1"));
        }
        let horizon = meta
            .extra
            .get("horizon")
            .and_then(|v| v.as_u64())
            .map(|h| h as usize)
            .unwrap_or_else(|| hyperparameter_row(request.model).horizon);
        let seed = request.seed.unwrap_or(0);
        let mut streams = RolloutStreams::new(seed, 0);
        let theta0 = model.sample_prior(&mut streams.theta0);
        let mut particles = ThetaSet::new(model.theta_dim());
        for _ in 0..n_particles {
            particles.push(&model.sample_prior(&mut streams.contrastive));
        }
        let hidden = match request.mode {
            Mode::Live => None,
            Mode::Simulated => Some(Hidden {
                theta: theta0,
                log_lik: 0.0,
                outcomes: streams.outcomes,
            }),
        };
        let summary = actor.empty_summary();
        let mut session = Self {
            id,
            model,
            checkpoint: request.checkpoint.clone(),
            mode: request.mode,
            seed,
            horizon,
            actor,
            summary,
            history: History::new(),
            simulated_flags: Vec::new(),
            ell: LogContrastiveLikelihoods::new(n_particles),
            particles,
            hidden,
            info_gain: Vec::new(),
            pending: None,
            policy_rng: streams.policy,
            scratch: Vec::new(),
        };
        session.propose();
        Ok(session)
    }

    fn propose(&mut self) {
        self.pending = if self.history.len() < self.horizon {
            Some(self.actor.act(&self.summary, &mut self.policy_rng, false).design)
        } else {
            None
        };
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn summary(&self) -> &Summary {
        &self.summary
    }

    pub fn actor(&self) -> &Actor {
        &self.actor
    }

    pub fn pending(&self) -> Option<&Design> {
        self.pending.as_ref()
    }

    pub fn done(&self) -> bool {
        self.pending.is_none()
    }

    /// Records an outcome for the pending design and proposes the next one.
    /// In simulated mode a missing `y` is drawn from `p(y | θ₀, d)`.
    pub fn post_outcome(&mut self, y: Option<f64>) -> Result<(), ApiError> {
        let Some(design) = self.pending.clone() else {
            return Err(ApiError::session_done(&self.id, self.horizon));
        };
        let (y, simulated) = match (y, self.hidden.as_mut()) {
            (Some(y), _) => (y, false),
            (None, Some(h)) => {
                let y = self
                    .model
                    .sample_outcome(&h.theta, &design, &mut h.outcomes)
                    .map_err(|e| ApiError::internal(e.to_string()))?;
                (y, true)
            }
            (None, None) => return Err(ApiError::invalid_request("live sessions need an outcome y")),
        };
        if let Err(e) = self.model.validate_outcome(&design, y) {
            return Err(ApiError::invalid_outcome(e.to_string(), self.model.outcome_support(&design)));
        }
        self.ell
            .update(&self.model, &self.particles, &design, y, &mut self.scratch)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        if let Some(h) = self.hidden.as_mut() {
            h.log_lik += self
                .model
                .log_likelihood(&h.theta, &design, y)
                .map_err(|e| ApiError::internal(e.to_string()))?;
            let mut ell = Vec::with_capacity(self.ell.len() + 1);
            ell.push(h.log_lik);
            ell.extend_from_slice(self.ell.values());
            self.info_gain.push(g_value(&ell));
        }
        self.actor.update_summary(&mut self.summary, &self.model, &design, y);
        self.history.push(design, y);
        self.simulated_flags.push(simulated);
        self.propose();
        Ok(())
    }

    /// Compares the incremental summary with a from-scratch encoding.
    pub fn summary_consistent(&self) -> bool {
        let fresh = self.actor.encode_history(&self.model, &self.history);
        fresh
            .values
            .iter()
            .zip(&self.summary.values)
            .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + a.abs()))
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.id.clone(),
            model: self.model.id(),
            checkpoint: self.checkpoint.clone(),
            mode: self.mode,
            seed: self.seed,
            n_particles: self.particles.len(),
            horizon: self.horizon,
            step: self.history.len() + 1,
            done: self.done(),
            design: self.pending.clone(),
            outcome_support: self.pending.as_ref().map(|d| self.model.outcome_support(d)),
            history: self
                .history
                .iter()
                .zip(&self.simulated_flags)
                .enumerate()
                .map(|(i, ((d, y), s))| Observation {
                    t: i + 1,
                    design: d.clone(),
                    y,
                    simulated: *s,
                })
                .collect(),
            information_gain: self.info_gain.clone(),
        }
    }

    /// SNIS view over the first `n` particles (all by default), weights normalised over those returned.
    pub fn posterior(&self, n: Option<usize>) -> Result<PosteriorView, ApiError> {
        let total = self.particles.len();
        let n = n.unwrap_or(total);
        if n == 0 || n > total {
            return Err(ApiError::invalid_request(format!("n must lie in [1, {total}], got {n}")));
        }
        let mut subset = ThetaSet::new(self.particles.dim());
        for theta in self.particles.iter().take(n) {
            subset.push(theta);
        }
        let weighted = posterior_snis(&subset, &self.ell.values()[..n]).map_err(|_| ApiError::low_ess(0.0, total))?;
        if weighted.ess < MIN_ESS {
            return Err(ApiError::low_ess(weighted.ess, total));
        }
        Ok(PosteriorView {
            session_id: self.id.clone(),
            step: self.history.len() + 1,
            n,
            parameter_names: self.model.theta_labels(),
            thetas: weighted.thetas.iter().map(|t| t.to_vec()).collect(),
            weights: weighted.weights,
            ess: weighted.ess,
        })
    }
}
