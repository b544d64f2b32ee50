use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::{Gumbel, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AgentError, Encoder, Summary};
use crate::autodiff::{gaussian_log_density, log_sum_exp, stable_softplus, Activation, Array, Graph, Mlp, MlpSpec, ParamStore, Var};
use crate::estimators::History;
use crate::models::{Design, DesignSpace, Model, ModelId};

pub const LOG_VAR_MIN: f64 = -20.0;
pub const LOG_VAR_MAX: f64 = 2.0;
pub const GUMBEL_TEMPERATURE: f64 = 1.0;
/// Keeps `tanh` outputs off the box faces after rounding.
const TANH_LIMIT: f64 = 1.0 - 1e-12;

pub const ENCODER_PREFIX: &str = "actor.enc";
pub const HEAD_PREFIX: &str = "actor.head";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Continuous,
    Discrete,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Continuous => "continuous",
            PolicyKind::Discrete => "discrete",
        }
    }
}

/// Layer widths shared by actor and critics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub summary_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            summary_dim: 64,
            encoder_hidden: vec![128, 128],
            head_hidden: vec![128, 128],
            critic_hidden: vec![128, 128],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContinuousMode {
    Sample,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscreteMode {
    /// Softmax of Gumbel-perturbed logits; the design is its argmax.
    Relaxed,
    /// Argmax of Gumbel-perturbed logits: an exact categorical sample.
    Hard,
    /// Argmax of the logits without noise.
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    pub design: Design,
    /// Critic-side action: `tanh(u)` in `(-1, 1)^k`, or a one-hot / relaxed vector over indices.
    pub normalized: Vec<f64>,
    pub log_prob: f64,
}

/// Graph nodes of a batch of reparameterised continuous actions.
pub struct ContinuousGraph {
    pub action: Var,
    pub log_prob: Var,
}

/// Graph nodes of a batch of straight-through discrete actions.
pub struct DiscreteGraph {
    /// Forward value is the hard one-hot; gradients flow through the relaxed sample.
    pub action: Var,
    pub log_probs: Var,
    /// `Σ_a π(a) log π(a)` per row.
    pub neg_entropy: Var,
    pub hard: Vec<usize>,
}

/// Design policy: encoder `ψ_π` plus a head on the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    model: ModelId,
    space: DesignSpace,
    arch: Architecture,
    store: ParamStore,
    encoder: Encoder,
    head: Mlp,
}

fn head_spec(arch: &Architecture, space: &DesignSpace) -> MlpSpec {
    let out = match space {
        DesignSpace::Box { lower, .. } => 2 * lower.len(),
        DesignSpace::Indices { first, last } => last - first + 1,
    };
    MlpSpec::new(arch.summary_dim, &arch.head_hidden, Activation::Relu, out)
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(model: &Model, arch: Architecture, rng: &mut R) -> Self {
        let space = model.design_space();
        let mut store = ParamStore::new();
        let encoder = Encoder::new(
            Encoder::spec(model.feature_dim(), &arch.encoder_hidden, arch.summary_dim),
            &mut store,
            ENCODER_PREFIX,
            rng,
        );
        let head = Mlp::new(head_spec(&arch, &space), &mut store, HEAD_PREFIX, rng);
        Self {
            model: model.id(),
            space,
            arch,
            store,
            encoder,
            head,
        }
    }

    /// Rebuilds an actor around loaded parameters.
    pub fn from_params(model: &Model, arch: Architecture, store: ParamStore) -> Result<Self, AgentError> {
        let space = model.design_space();
        let encoder = Encoder::attach(
            Encoder::spec(model.feature_dim(), &arch.encoder_hidden, arch.summary_dim),
            &store,
            ENCODER_PREFIX,
        )
        .ok_or_else(|| AgentError::Mismatch(format!("encoder parameters do not fit a {} policy", model.id())))?;
        let head = Mlp::attach(head_spec(&arch, &space), &store, HEAD_PREFIX)
            .ok_or_else(|| AgentError::Mismatch(format!("head parameters do not fit a {} policy", model.id())))?;
        if store.len() != encoder.mlp().param_ids().count() + head.param_ids().count() {
            return Err(AgentError::Mismatch("unexpected extra tensors in policy parameters".into()));
        }
        Ok(Self {
            model: model.id(),
            space,
            arch,
            store,
            encoder,
            head,
        })
    }

    pub fn model_id(&self) -> ModelId {
        self.model
    }

    pub fn kind(&self) -> PolicyKind {
        if self.space.is_discrete() {
            PolicyKind::Discrete
        } else {
            PolicyKind::Continuous
        }
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    /// Width of the critic-side action vector.
    pub fn action_dim(&self) -> usize {
        match &self.space {
            DesignSpace::Box { lower, .. } => lower.len(),
            DesignSpace::Indices { first, last } => last - first + 1,
        }
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn head(&self) -> &Mlp {
        &self.head
    }

    pub fn summary_dim(&self) -> usize {
        self.arch.summary_dim
    }

    pub fn empty_summary(&self) -> Summary {
        Summary::zeros(self.summary_dim())
    }

    pub fn update_summary(&self, summary: &mut Summary, model: &Model, design: &Design, y: f64) {
        self.encoder.update(&self.store, summary, model, design, y);
    }

    pub fn encode_history(&self, model: &Model, history: &History) -> Summary {
        self.encoder.encode_history(&self.store, model, history)
    }

    fn head_row(&self, summary: &Summary) -> Vec<f64> {
        self.head.forward_row(&self.store, &summary.values)
    }

    fn box_bounds(&self) -> (&[f64], &[f64]) {
        match &self.space {
            DesignSpace::Box { lower, upper } => (lower, upper),
            DesignSpace::Indices { .. } => panic!("continuous action requested from a discrete policy"),
        }
    }

    /// Maps `tanh` outputs to the design box.
    pub fn rescale(&self, normalized: &[f64]) -> Design {
        let (lower, upper) = self.box_bounds();
        Design::Continuous(
            normalized
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(a, (l, u))| 0.5 * (l + u) + 0.5 * (u - l) * a.clamp(-TANH_LIMIT, TANH_LIMIT))
                .collect(),
        )
    }

    /// `Σ log(half width)`: the density change of the affine rescale.
    fn log_half_widths(&self) -> f64 {
        let (lower, upper) = self.box_bounds();
        lower.iter().zip(upper).map(|(l, u)| (0.5 * (u - l)).ln()).sum()
    }

    fn split_head(&self, out: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = out.len() / 2;
        let mean = out[..k].to_vec();
        let log_std = out[k..].iter().map(|v| 0.5 * v.clamp(LOG_VAR_MIN, LOG_VAR_MAX)).collect();
        (mean, log_std)
    }

    pub fn act_continuous<R: Rng + ?Sized>(&self, summary: &Summary, rng: &mut R, mode: ContinuousMode) -> ActionSample {
        let (mean, log_std) = self.split_head(&self.head_row(summary));
        let u: Vec<f64> = match mode {
            ContinuousMode::Sample => mean
                .iter()
                .zip(&log_std)
                .map(|(m, s)| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + s.exp() * z
                })
                .collect(),
            ContinuousMode::Mean => mean.clone(),
        };
        let log_prob = tanh_gaussian_log_prob(&u, &mean, &log_std) - self.log_half_widths();
        let normalized: Vec<f64> = u.iter().map(|v| v.tanh()).collect();
        ActionSample {
            design: self.rescale(&normalized),
            normalized,
            log_prob,
        }
    }

    /// Density of a design in the box under the continuous policy.
    pub fn log_prob_continuous(&self, summary: &Summary, design: &[f64]) -> f64 {
        let (mean, log_std) = self.split_head(&self.head_row(summary));
        let (lower, upper) = self.box_bounds();
        let u: Vec<f64> = design
            .iter()
            .zip(lower.iter().zip(upper))
            .map(|(d, (l, h))| ((2.0 * d - l - h) / (h - l)).atanh())
            .collect();
        tanh_gaussian_log_prob(&u, &mean, &log_std) - self.log_half_widths()
    }

    pub fn logits(&self, summary: &Summary) -> Vec<f64> {
        self.head_row(summary)
    }

    pub fn act_discrete<R: Rng + ?Sized>(&self, summary: &Summary, rng: &mut R, mode: DiscreteMode) -> ActionSample {
        let logits = self.head_row(summary);
        let lse = log_sum_exp(&logits);
        let n = logits.len();
        let (index, normalized) = match mode {
            DiscreteMode::Greedy => {
                let i = argmax(&logits);
                (i, one_hot(i, n))
            }
            DiscreteMode::Hard | DiscreteMode::Relaxed => {
                let gumbel = Gumbel::new(0.0, 1.0).expect("unit Gumbel");
                let perturbed: Vec<f64> = logits
                    .iter()
                    .map(|l| (l + rng.sample(gumbel)) / GUMBEL_TEMPERATURE)
                    .collect();
                let i = argmax(&perturbed);
                if mode == DiscreteMode::Hard {
                    (i, one_hot(i, n))
                } else {
                    (i, softmax(&perturbed))
                }
            }
        };
        ActionSample {
            design: self.index_design(index),
            normalized,
            log_prob: logits[index] - lse,
        }
    }

    pub fn index_design(&self, index: usize) -> Design {
        match &self.space {
            DesignSpace::Indices { first, .. } => Design::Discrete(first + index),
            DesignSpace::Box { .. } => panic!("discrete action requested from a continuous policy"),
        }
    }

    /// Stochastic action for data collection (`explore`), deterministic otherwise.
    pub fn act<R: Rng + ?Sized>(&self, summary: &Summary, rng: &mut R, explore: bool) -> ActionSample {
        match (self.kind(), explore) {
            (PolicyKind::Continuous, true) => self.act_continuous(summary, rng, ContinuousMode::Sample),
            (PolicyKind::Continuous, false) => self.act_continuous(summary, rng, ContinuousMode::Mean),
            (PolicyKind::Discrete, true) => self.act_discrete(summary, rng, DiscreteMode::Hard),
            (PolicyKind::Discrete, false) => self.act_discrete(summary, rng, DiscreteMode::Greedy),
        }
    }

    /// Reparameterised actions for a batch of summaries; `noise` is `[rows, k]` standard normal.
    pub fn graph_continuous(&self, g: &mut Graph, bound: &[Var], summaries: Var, noise: Array) -> Result<ContinuousGraph, AgentError> {
        let k = self.action_dim();
        let out = self.head.forward(g, bound, summaries)?;
        let mean = g.slice_cols(out, 0, k)?;
        let log_var = g.slice_cols(out, k, 2 * k)?;
        let log_var = g.clamp(log_var, LOG_VAR_MIN, LOG_VAR_MAX)?;
        let log_std = g.scale(log_var, 0.5)?;
        let std = g.exp(log_std)?;
        let eps = g.constant(noise);
        let spread = g.mul(std, eps)?;
        let u = g.add(mean, spread)?;
        let lp = g.gaussian_log_pdf(u, mean, log_std)?;
        let lp = g.sum_last(lp)?;
        // log(1 − tanh²u) = 2(log 2 − u − softplus(−2u))
        let neg2u = g.scale(u, -2.0)?;
        let sp = g.softplus(neg2u)?;
        let inner = g.add(u, sp)?;
        let corr = g.scale(inner, -2.0)?;
        let corr = g.add_const(corr, 2.0 * LN_2)?;
        let corr = g.sum_last(corr)?;
        let log_prob = g.sub(lp, corr)?;
        let log_prob = g.add_const(log_prob, -self.log_half_widths())?;
        let action = g.tanh(u)?;
        Ok(ContinuousGraph { action, log_prob })
    }

    /// Straight-through Gumbel-softmax actions; `gumbel` is `[rows, |A|]` unit Gumbel noise.
    pub fn graph_discrete(&self, g: &mut Graph, bound: &[Var], summaries: Var, gumbel: Array) -> Result<DiscreteGraph, AgentError> {
        let logits = self.head.forward(g, bound, summaries)?;
        let lse = g.log_sum_exp(logits)?;
        let log_probs = g.sub(logits, lse)?;
        let probs = g.exp(log_probs)?;
        let plogp = g.mul(probs, log_probs)?;
        let neg_entropy = g.sum_last(plogp)?;

        let noise = g.constant(gumbel);
        let perturbed = g.add(logits, noise)?;
        let perturbed = g.scale(perturbed, 1.0 / GUMBEL_TEMPERATURE)?;
        let plse = g.log_sum_exp(perturbed)?;
        let log_soft = g.sub(perturbed, plse)?;
        let soft = g.exp(log_soft)?;

        let (rows, n) = g.value(soft).dims2();
        let soft_values = g.value(soft).values().to_vec();
        let pert_values = g.value(perturbed).values().to_vec();
        let mut hard = Vec::with_capacity(rows);
        let mut shift = vec![0.0; rows * n];
        for r in 0..rows {
            let i = argmax(&pert_values[r * n..(r + 1) * n]);
            hard.push(i);
            for c in 0..n {
                let target = if c == i { 1.0 } else { 0.0 };
                shift[r * n + c] = target - soft_values[r * n + c];
            }
        }
        let shift = g.constant(Array::matrix(rows, n, shift));
        let action = g.add(soft, shift)?;
        Ok(DiscreteGraph {
            action,
            log_probs,
            neg_entropy,
            hard,
        })
    }
}

/// `Σ_i [log N(u_i; m_i, e^{s_i}) − log(1 − tanh² u_i)]`.
pub fn tanh_gaussian_log_prob(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    u.iter()
        .zip(mean.iter().zip(log_std))
        .map(|(&u, (&m, &s))| gaussian_log_density(u, m, s.exp()) - 2.0 * (LN_2 - u - stable_softplus(-2.0 * u)))
        .sum()
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| (x - lse).exp()).collect()
}
