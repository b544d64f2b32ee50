use serde::{Deserialize, Serialize};

use super::{mean_stderr, BoundEstimate, BoundKind, DesignPolicy, EstimatorError, History, PolicyError};
use crate::models::{Design, Model};
use crate::rng::{RolloutStreams, StreamRng};
use crate::sedmdp::{EnvConfig, EnvError, EpisodeContext, RewardMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub contrastive: usize,
    pub horizon: usize,
    pub rollouts: usize,
    pub seed: u64,
}

/// One evaluated rollout: the realised history and both integrands after every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutTrace {
    pub rollout: usize,
    pub history: History,
    /// `g_lower[t-1]` is the sPCE integrand of the first `t` experiments.
    pub g_lower: Vec<f64>,
    pub g_upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialBounds {
    pub lower: BoundEstimate,
    pub upper: BoundEstimate,
    pub rollouts: Vec<RolloutTrace>,
}

impl SequentialBounds {
    /// Mean and standard error of both integrands at step `t` (1-based).
    pub fn at_step(&self, t: usize) -> ((f64, f64), (f64, f64)) {
        let lower: Vec<f64> = self.rollouts.iter().map(|r| r.g_lower[t - 1]).collect();
        let upper: Vec<f64> = self.rollouts.iter().map(|r| r.g_upper[t - 1]).collect();
        (mean_stderr(&lower), mean_stderr(&upper))
    }
}

/// Always proposes the same designs, cycling if the horizon is longer.
#[derive(Debug, Clone)]
pub struct FixedDesignPolicy {
    designs: Vec<Design>,
}

impl FixedDesignPolicy {
    pub fn new(designs: Vec<Design>) -> Self {
        assert!(!designs.is_empty());
        Self { designs }
    }

    pub fn single(design: Design) -> Self {
        Self::new(vec![design])
    }
}

impl DesignPolicy for FixedDesignPolicy {
    fn name(&self) -> String {
        "fixed".to_string()
    }

    fn propose(&mut self, _model: &Model, history: &History, _rng: &mut StreamRng) -> Result<Design, PolicyError> {
        Ok(self.designs[history.len() % self.designs.len()].clone())
    }
}

/// Rolls `policy` for `rollouts` episodes and scores every prefix with both
/// bounds. Rollout `i` reads the streams `(seed, i)`; the upper and lower
/// integrands share one contrastive set per rollout.
pub fn sequential_bounds<P: DesignPolicy + ?Sized>(
    model: &Model,
    policy: &mut P,
    config: &BoundConfig,
) -> Result<SequentialBounds, EstimatorError> {
    if config.rollouts == 0 {
        return Err(EstimatorError::InvalidSetting("need at least one rollout".into()));
    }
    let env_config = EnvConfig {
        contrastive: config.contrastive,
        horizon: config.horizon,
        reward_mode: RewardMode::Dense,
        gamma: 1.0,
    };
    let mut traces = Vec::with_capacity(config.rollouts);
    for rollout in 0..config.rollouts {
        let mut streams = RolloutStreams::new(config.seed, rollout as u64);
        traces.push(run_rollout(model, policy, env_config, rollout, &mut streams)?);
    }
    let finals_lower: Vec<f64> = traces.iter().map(|r| *r.g_lower.last().unwrap()).collect();
    let finals_upper: Vec<f64> = traces.iter().map(|r| *r.g_upper.last().unwrap()).collect();
    let estimate = |values: &[f64], kind| {
        let (mean, stderr) = mean_stderr(values);
        BoundEstimate {
            mean,
            stderr,
            n: values.len(),
            contrastive: config.contrastive,
            horizon: config.horizon,
            kind,
        }
    };
    Ok(SequentialBounds {
        lower: estimate(&finals_lower, BoundKind::Lower),
        upper: estimate(&finals_upper, BoundKind::Upper),
        rollouts: traces,
    })
}

/// One episode under `streams`; shared with callers that replay a single rollout.
pub(crate) fn run_rollout<P: DesignPolicy + ?Sized>(
    model: &Model,
    policy: &mut P,
    env_config: EnvConfig,
    rollout: usize,
    streams: &mut RolloutStreams,
) -> Result<RolloutTrace, EstimatorError> {
    let env_err = |source: EnvError| EstimatorError::Env { rollout, source };
    let mut ctx = EpisodeContext::reset(model, env_config, streams).map_err(env_err)?;
    policy.begin_rollout();
    let mut g_lower = Vec::with_capacity(env_config.horizon);
    let mut g_upper = Vec::with_capacity(env_config.horizon);
    while !ctx.done() {
        let step = ctx.t() + 1;
        let design = policy
            .propose(model, ctx.history(), &mut streams.policy)
            .map_err(|e| EstimatorError::Policy { rollout, step, message: e.0 })?;
        if !model.design_space().contains(&design) {
            return Err(EstimatorError::OutOfBounds { rollout, step, design: design.to_string() });
        }
        ctx.step(&design, &mut streams.outcomes).map_err(env_err)?;
        g_lower.push(ctx.g_lower());
        g_upper.push(ctx.g_upper());
    }
    Ok(RolloutTrace {
        rollout,
        history: ctx.history().clone(),
        g_lower,
        g_upper,
    })
}

pub fn spce<P: DesignPolicy + ?Sized>(model: &Model, policy: &mut P, config: &BoundConfig) -> Result<BoundEstimate, EstimatorError> {
    Ok(sequential_bounds(model, policy, config)?.lower)
}

pub fn snmc<P: DesignPolicy + ?Sized>(model: &Model, policy: &mut P, config: &BoundConfig) -> Result<BoundEstimate, EstimatorError> {
    Ok(sequential_bounds(model, policy, config)?.upper)
}

/// Single-experiment PCE lower bound: sPCE of the constant policy with `T = 1`.
pub fn pce(model: &Model, design: &Design, contrastive: usize, n_outer: usize, seed: u64) -> Result<BoundEstimate, EstimatorError> {
    let config = BoundConfig {
        contrastive,
        horizon: 1,
        rollouts: n_outer,
        seed,
    };
    spce(model, &mut FixedDesignPolicy::single(design.clone()), &config)
}
