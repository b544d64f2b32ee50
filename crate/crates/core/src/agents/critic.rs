use rand::Rng;

use super::{AgentError, Architecture, Encoder};
use crate::autodiff::{Activation, Graph, Mlp, MlpSpec, ParamStore, Var};

pub const CRITIC_ENCODER_PREFIX: &str = "critic.enc";

/// `N` Q-heads on a shared history encoder `ψ_Q`, plus a Polyak-averaged target copy.
///
/// Target parameters mirror the online layout name for name, so the same
/// [`Mlp`] handles evaluate either set depending on which store is bound.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticEnsemble {
    store: ParamStore,
    target: ParamStore,
    encoder: Encoder,
    heads: Vec<Mlp>,
    action_dim: usize,
}

impl CriticEnsemble {
    pub fn new<R: Rng + ?Sized>(
        feature_dim: usize,
        action_dim: usize,
        n: usize,
        arch: &Architecture,
        rng: &mut R,
    ) -> Result<Self, AgentError> {
        if n < 2 {
            return Err(AgentError::InvalidSetting(format!("the critic ensemble needs N >= 2, got {n}")));
        }
        let mut store = ParamStore::new();
        let encoder = Encoder::new(
            Encoder::spec(feature_dim, &arch.encoder_hidden, arch.summary_dim),
            &mut store,
            CRITIC_ENCODER_PREFIX,
            rng,
        );
        let heads = (0..n)
            .map(|i| {
                let spec = MlpSpec::new(arch.summary_dim + action_dim, &arch.critic_hidden, Activation::Relu, 1);
                Mlp::new(spec, &mut store, &format!("critic.q{i}"), rng)
            })
            .collect();
        let target = store.clone();
        Ok(Self {
            store,
            target,
            encoder,
            heads,
            action_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn target(&self) -> &ParamStore {
        &self.target
    }

    /// `target ← (1 − τ)·target + τ·online`.
    pub fn soft_update(&mut self, tau: f64) {
        self.target.soft_update_from(&self.store, tau);
    }

    /// `Q_i(B, a)` for every head; each result is `[rows, 1]`.
    pub fn forward(&self, g: &mut Graph, bound: &[Var], summaries: Var, actions: Var) -> Result<Vec<Var>, AgentError> {
        let input = g.concat(&[summaries, actions])?;
        self.heads
            .iter()
            .map(|h| h.forward(g, bound, input).map_err(AgentError::from))
            .collect()
    }

    /// Tapeless `Q_i(B, a)` from either the online or the target parameters.
    pub fn q_row(&self, target: bool, summary: &[f64], action: &[f64]) -> Vec<f64> {
        let store = if target { &self.target } else { &self.store };
        let mut x = summary.to_vec();
        x.extend_from_slice(action);
        self.heads.iter().map(|h| h.forward_row(store, &x)[0]).collect()
    }
}
