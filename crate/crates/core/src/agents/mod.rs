//! Policies, critics and baselines.

mod actor;
mod baselines;
mod critic;
mod encoder;

use std::path::Path;

use thiserror::Error;

pub use actor::{
    argmax, one_hot, softmax, tanh_gaussian_log_prob, ActionSample, Actor, Architecture, ContinuousGraph, ContinuousMode,
    DiscreteGraph, DiscreteMode, PolicyKind, GUMBEL_TEMPERATURE, LOG_VAR_MAX, LOG_VAR_MIN,
};
pub use baselines::{baseline_random, MyopicConfig, MyopicSnisPolicy, RandomPolicy};
pub use critic::CriticEnsemble;
pub use encoder::{Encoder, Summary};

use crate::autodiff::{load_checkpoint, save_checkpoint, AutodiffError, CheckpointError, CheckpointMeta, ParamStore};
use crate::estimators::{DesignPolicy, History, PolicyError};
use crate::models::{Design, Model, ModelError, ModelId};
use crate::rng::StreamRng;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("checkpoint holds a {checkpoint} policy but {requested} was requested")]
    ModelMismatch { checkpoint: String, requested: String },
    #[error("incompatible policy parameters: {0}")]
    Mismatch(String),
    #[error("invalid agent setting: {0}")]
    InvalidSetting(String),
}

/// A trained actor behind the [`DesignPolicy`] interface, keeping its
/// summary incrementally in step with the history it is shown.
#[derive(Debug, Clone)]
pub struct PolicyAgent {
    actor: Actor,
    explore: bool,
    summary: Summary,
    label: String,
}

impl PolicyAgent {
    /// `explore = false` gives the deterministic evaluation action (tanh of the mean, or the greedy index).
    pub fn new(actor: Actor, explore: bool) -> Self {
        let summary = actor.empty_summary();
        Self {
            actor,
            explore,
            summary,
            label: "rl".into(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn actor(&self) -> &Actor {
        &self.actor
    }

    pub fn summary(&self) -> &Summary {
        &self.summary
    }

    /// Brings the summary up to date with `history`, re-encoding from scratch
    /// only if the history is not an extension of what was seen.
    pub fn sync(&mut self, model: &Model, history: &History) {
        if history.len() < self.summary.t {
            self.summary = self.actor.empty_summary();
        }
        for (d, y) in history.iter().skip(self.summary.t) {
            self.actor.update_summary(&mut self.summary, model, d, y);
        }
    }

    pub fn propose_action(&mut self, model: &Model, history: &History, rng: &mut StreamRng) -> ActionSample {
        self.sync(model, history);
        self.actor.act(&self.summary, rng, self.explore)
    }
}

impl DesignPolicy for PolicyAgent {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn begin_rollout(&mut self) {
        self.summary = self.actor.empty_summary();
    }

    fn propose(&mut self, model: &Model, history: &History, rng: &mut StreamRng) -> Result<Design, PolicyError> {
        Ok(self.propose_action(model, history, rng).design)
    }
}

/// Writes the actor parameters with `policy_kind`, `summary_dim` and the architecture in the metadata.
pub fn save_policy(path: &Path, actor: &Actor, meta: CheckpointMeta) -> Result<(), AgentError> {
    let arch = serde_json::to_value(actor.architecture()).expect("architecture serialises");
    let meta = meta
        .with("policy_kind", actor.kind().as_str())
        .with("summary_dim", actor.summary_dim() as u64)
        .with("architecture", arch);
    save_checkpoint(path, &actor.store().to_named(), &meta)?;
    Ok(())
}

/// Loads a policy checkpoint; with `expected` set, a different model id is an error naming both.
pub fn load_policy(path: &Path, expected: Option<ModelId>) -> Result<(Actor, CheckpointMeta), AgentError> {
    let (tensors, meta) = load_checkpoint(path)?;
    let id: ModelId = meta
        .model
        .parse()
        .map_err(|_| AgentError::Mismatch(format!("unknown model id {:?} in checkpoint", meta.model)))?;
    if let Some(expected) = expected {
        if expected != id {
            return Err(AgentError::ModelMismatch {
                checkpoint: id.to_string(),
                requested: expected.to_string(),
            });
        }
    }
    let arch: Architecture = match meta.extra.get("architecture") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| AgentError::Mismatch(format!("architecture: {e}")))?,
        None => Architecture::default(),
    };
    let model = Model::new(id);
    let actor = Actor::from_params(&model, arch, ParamStore::from_named(tensors))?;
    if let Some(kind) = meta.extra_str("policy_kind") {
        if kind != actor.kind().as_str() {
            return Err(AgentError::Mismatch(format!("policy_kind {kind} does not fit model {id}")));
        }
    }
    Ok((actor, meta))
}
