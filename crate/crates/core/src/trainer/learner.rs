use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Gumbel, StandardNormal};

use super::{BatchItem, ReplayBuffer, TrainError};
use crate::agents::{Actor, CriticEnsemble, PolicyKind};
use crate::autodiff::{AdamConfig, AdamState, Array, Graph, ParamStore, Var};
use crate::models::{Design, DesignSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub gamma: f64,
    pub target_rate: f64,
    pub m_subset: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub init_alpha: f64,
    pub target_entropy: f64,
    pub tune_alpha: bool,
}

/// A batch laid out for the graphs: every distinct episode's pair features
/// once, and per transition the feature rows that make up `h_t` and `h_{t+1}`.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub features: Array,
    pub states: Vec<Vec<usize>>,
    pub next_states: Vec<Vec<usize>>,
    /// Taken actions in critic coordinates, `[rows, action_dim]`.
    pub actions: Array,
    pub rewards: Vec<f64>,
    pub not_done: Vec<f64>,
}

impl PreparedBatch {
    pub fn rows(&self) -> usize {
        self.rewards.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorStats {
    pub loss: f64,
    /// Batch mean of `log π` (continuous) or `Σ π log π` (discrete).
    pub log_prob: f64,
}

/// Critic-side encoding of a taken design.
pub fn normalized_action(space: &DesignSpace, design: &Design) -> Vec<f64> {
    match (space, design) {
        (DesignSpace::Box { lower, upper }, Design::Continuous(d)) => d
            .iter()
            .zip(lower.iter().zip(upper))
            .map(|(x, (l, u))| ((2.0 * x - l - u) / (u - l)).clamp(-1.0, 1.0))
            .collect(),
        (DesignSpace::Indices { first, last }, Design::Discrete(i)) => {
            let mut v = vec![0.0; last - first + 1];
            v[i - first] = 1.0;
            v
        }
        _ => panic!("design kind does not match the design space"),
    }
}

/// Actor, critic ensemble, their optimisers and the entropy temperature.
#[derive(Debug, Clone)]
pub struct Learner {
    pub actor: Actor,
    pub critics: CriticEnsemble,
    actor_opt: AdamState,
    critic_opt: AdamState,
    log_alpha: ParamStore,
    alpha_opt: AdamState,
    config: LearnerConfig,
}

enum Sampled {
    Continuous { action: Var, log_prob: Var },
    Discrete { action: Var, log_probs: Var, neg_entropy: Var, hard: Vec<usize> },
}

impl Learner {
    pub fn new(actor: Actor, critics: CriticEnsemble, config: LearnerConfig) -> Result<Self, TrainError> {
        if config.m_subset < 1 || config.m_subset > critics.len() {
            return Err(TrainError::InvalidConfig(format!(
                "M = {} must lie in [1, N = {}]",
                config.m_subset,
                critics.len()
            )));
        }
        let actor_opt = AdamState::new(AdamConfig::with_lr(config.actor_lr), actor.store());
        let critic_opt = AdamState::new(AdamConfig::with_lr(config.critic_lr), critics.store());
        let mut log_alpha = ParamStore::new();
        log_alpha.add("log_alpha", Array::scalar(config.init_alpha.ln()));
        let alpha_opt = AdamState::new(AdamConfig::with_lr(config.alpha_lr), &log_alpha);
        Ok(Self {
            actor,
            critics,
            actor_opt,
            critic_opt,
            log_alpha,
            alpha_opt,
            config,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.arrays()[0].item().exp()
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.log_alpha.arrays_mut()[0].values_mut()[0] = alpha.ln();
    }

    pub fn prepare(&self, buffer: &ReplayBuffer, items: &[BatchItem]) -> PreparedBatch {
        let mut offsets = BTreeMap::new();
        let mut features = Vec::new();
        let mut total_rows = 0;
        let mut feature_dim = 0;
        for item in items {
            offsets.entry(item.episode).or_insert_with(|| {
                let e = buffer.episode(item.episode);
                feature_dim = e.feature_dim;
                features.extend_from_slice(&e.features);
                let start = total_rows;
                total_rows += e.len();
                start
            });
        }
        let space = self.actor.space().clone();
        let action_dim = self.actor.action_dim();
        let mut states = Vec::with_capacity(items.len());
        let mut next_states = Vec::with_capacity(items.len());
        let mut actions = Vec::with_capacity(items.len() * action_dim);
        let mut rewards = Vec::with_capacity(items.len());
        let mut not_done = Vec::with_capacity(items.len());
        for item in items {
            let e = buffer.episode(item.episode);
            let start = offsets[&item.episode];
            states.push((start..start + item.t).collect());
            next_states.push((start..start + item.t + 1).collect());
            actions.extend(normalized_action(&space, &e.history.designs()[item.t]));
            rewards.push(e.rewards[item.t]);
            not_done.push(if item.t + 1 == e.len() { 0.0 } else { 1.0 });
        }
        PreparedBatch {
            features: Array::matrix(total_rows, feature_dim, features),
            states,
            next_states,
            actions: Array::matrix(items.len(), action_dim, actions),
            rewards,
            not_done,
        }
    }

    fn sample_actions<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        bound: &[Var],
        summaries: Var,
        rng: &mut R,
    ) -> Result<Sampled, TrainError> {
        let rows = g.shape(summaries)[0];
        let k = self.actor.action_dim();
        Ok(match self.actor.kind() {
            PolicyKind::Continuous => {
                let noise: Vec<f64> = (0..rows * k).map(|_| rng.sample(StandardNormal)).collect();
                let out = self.actor.graph_continuous(g, bound, summaries, Array::matrix(rows, k, noise))?;
                Sampled::Continuous {
                    action: out.action,
                    log_prob: out.log_prob,
                }
            }
            PolicyKind::Discrete => {
                let gumbel = Gumbel::new(0.0, 1.0).expect("unit Gumbel");
                let noise: Vec<f64> = (0..rows * k).map(|_| rng.sample(gumbel)).collect();
                let out = self.actor.graph_discrete(g, bound, summaries, Array::matrix(rows, k, noise))?;
                Sampled::Discrete {
                    action: out.action,
                    log_probs: out.log_probs,
                    neg_entropy: out.neg_entropy,
                    hard: out.hard,
                }
            }
        })
    }

    /// `y = r + γ(1 − done)(min_{i∈M} Q̄_i(B′, a′) − α log π(a′|B′))` with `a′ ~ π(·|B′)`.
    pub fn critic_targets<R: Rng + ?Sized>(&self, batch: &PreparedBatch, rng: &mut R) -> Result<Vec<f64>, TrainError> {
        let n = batch.rows();
        if self.config.gamma == 0.0 {
            return Ok(batch.rewards.clone());
        }
        let subset: Vec<usize> = sample_indices(rng, self.critics.len(), self.config.m_subset).into_vec();
        let mut g = Graph::new();
        let abound = self.actor.store().bind_frozen(&mut g);
        let feats = g.constant(batch.features.clone());
        let s_next = self.actor.encoder().forward_prefixes(&mut g, &abound, feats, batch.next_states.clone())?;
        let sampled = self.sample_actions(&mut g, &abound, s_next, rng)?;
        let (action, log_prob): (Var, Vec<f64>) = match &sampled {
            Sampled::Continuous { action, log_prob } => (*action, g.value(*log_prob).values().to_vec()),
            Sampled::Discrete { action, log_probs, hard, .. } => {
                let lp = g.value(*log_probs);
                (*action, hard.iter().enumerate().map(|(r, &i)| lp.row(r)[i]).collect())
            }
        };
        let tbound = self.critics.target().bind_frozen(&mut g);
        let sq_next = self.critics.encoder().forward_prefixes(&mut g, &tbound, feats, batch.next_states.clone())?;
        let qs = self.critics.forward(&mut g, &tbound, sq_next, action)?;
        let alpha = self.alpha();
        let mut targets = Vec::with_capacity(n);
        for r in 0..n {
            let min_q = subset
                .iter()
                .map(|&i| g.value(qs[i]).values()[r])
                .fold(f64::INFINITY, f64::min);
            let bootstrap = min_q - alpha * log_prob[r];
            targets.push(batch.rewards[r] + self.config.gamma * batch.not_done[r] * bootstrap);
        }
        if let Some(r) = targets.iter().position(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteLoss(format!(
                "critic target row {r}: reward {}, alpha {alpha}, log_prob {}",
                batch.rewards[r], log_prob[r]
            )));
        }
        Ok(targets)
    }

    /// One Adam step on every online critic towards the shared targets;
    /// returns the squared error averaged over critics and rows.
    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &PreparedBatch, rng: &mut R) -> Result<f64, TrainError> {
        let targets = self.critic_targets(batch, rng)?;
        let n = batch.rows();
        let mut g = Graph::new();
        let cbound = self.critics.store().bind(&mut g);
        let feats = g.constant(batch.features.clone());
        let s = self.critics.encoder().forward_prefixes(&mut g, &cbound, feats, batch.states.clone())?;
        let a = g.constant(batch.actions.clone());
        let qs = self.critics.forward(&mut g, &cbound, s, a)?;
        let y = g.constant(Array::matrix(n, 1, targets));
        let mut total: Option<Var> = None;
        for q in qs {
            let diff = g.sub(q, y)?;
            let sq = g.mul(diff, diff)?;
            let m = g.mean(sq)?;
            total = Some(match total {
                Some(t) => g.add(t, m)?,
                None => m,
            });
        }
        let total = total.expect("at least two critics");
        let loss = g.value(total).item() / self.critics.len() as f64;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss(format!("critic loss {loss} over {n} rows")));
        }
        let grads = g.backward(total)?;
        let grads: Vec<Array> = cbound.iter().map(|v| grads.wrt(*v)).collect();
        self.critic_opt.step(self.critics.store_mut(), &grads)?;
        self.critics.soft_update(self.config.target_rate);
        Ok(loss)
    }

    /// Builds the actor objective `mean(α log π − mean_i Q_i(B, a))` (continuous)
    /// or `mean(α Σ π log π − mean_i Q_i(B, a_st))` (discrete).
    fn actor_objective<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        batch: &PreparedBatch,
        rng: &mut R,
    ) -> Result<(Var, Vec<Var>, f64), TrainError> {
        let abound = self.actor.store().bind(g);
        let feats = g.constant(batch.features.clone());
        let s = self.actor.encoder().forward_prefixes(g, &abound, feats, batch.states.clone())?;
        let sampled = self.sample_actions(g, &abound, s, rng)?;
        let cfrozen = self.critics.store().bind_frozen(g);
        let sq = self.critics.encoder().forward_prefixes(g, &cfrozen, feats, batch.states.clone())?;
        let (action, entropy_term) = match sampled {
            Sampled::Continuous { action, log_prob } => (action, log_prob),
            Sampled::Discrete { action, neg_entropy, .. } => (action, neg_entropy),
        };
        let qs = self.critics.forward(g, &cfrozen, sq, action)?;
        let mut q_sum = qs[0];
        for q in &qs[1..] {
            q_sum = g.add(q_sum, *q)?;
        }
        let q_mean = g.scale(q_sum, 1.0 / qs.len() as f64)?;
        let weighted = g.scale(entropy_term, self.alpha())?;
        let obj = g.sub(weighted, q_mean)?;
        let loss = g.mean(obj)?;
        let stat = g.value(entropy_term).values().iter().sum::<f64>() / batch.rows() as f64;
        Ok((loss, abound, stat))
    }

    /// Gradient of the actor objective with respect to every actor parameter.
    pub fn actor_gradients<R: Rng + ?Sized>(&self, batch: &PreparedBatch, rng: &mut R) -> Result<(f64, Vec<Array>, f64), TrainError> {
        let mut g = Graph::new();
        let (loss, abound, stat) = self.actor_objective(&mut g, batch, rng)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(TrainError::NonFiniteLoss(format!("actor loss {value} over {} rows", batch.rows())));
        }
        let grads = g.backward(loss)?;
        Ok((value, abound.iter().map(|v| grads.wrt(*v)).collect(), stat))
    }

    /// One Adam step on the actor, then one on `log α` toward the target entropy.
    pub fn actor_update<R: Rng + ?Sized>(&mut self, batch: &PreparedBatch, rng: &mut R) -> Result<ActorStats, TrainError> {
        let (loss, grads, stat) = self.actor_gradients(batch, rng)?;
        self.actor_opt.step(self.actor.store_mut(), &grads)?;
        if self.config.tune_alpha {
            let grad = -(stat + self.config.target_entropy);
            self.alpha_opt.step(&mut self.log_alpha, &[Array::scalar(grad)])?;
        }
        Ok(ActorStats { loss, log_prob: stat })
    }
}
