use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::autodiff::log_sum_exp;
use crate::estimators::{posterior_snis, DesignPolicy, History, LogContrastiveLikelihoods, PolicyError};
use crate::models::{binomial_log_pmf, Design, DesignSpace, Model, ModelId, ThetaSet};
use crate::rng::StreamRng;

/// Uniform over the design box or index set.
pub fn baseline_random<R: Rng + ?Sized>(model: &Model, rng: &mut R) -> Design {
    match model.design_space() {
        DesignSpace::Box { lower, upper } => {
            Design::Continuous(lower.iter().zip(&upper).map(|(l, u)| rng.random_range(*l..*u)).collect())
        }
        DesignSpace::Indices { first, last } => Design::Discrete(rng.random_range(first..=last)),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

impl DesignPolicy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn propose(&mut self, model: &Model, _history: &History, rng: &mut StreamRng) -> Result<Design, PolicyError> {
        Ok(baseline_random(model, rng))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MyopicConfig {
    pub n_particles: usize,
    pub n_outer: usize,
    pub min_ess: f64,
}

impl Default for MyopicConfig {
    fn default() -> Self {
        Self {
            n_particles: 500,
            n_outer: 50,
            min_ess: 10.0,
        }
    }
}

/// Likelihood access for the scoring loop. Prey likelihoods need an ODE
/// solve per (θ, design), so their consumption probabilities are tabulated
/// once per rollout.
#[derive(Debug, Clone)]
enum LikelihoodTable {
    Direct,
    Prey { probs: Vec<f64>, n_candidates: usize },
}

struct RolloutState {
    particles: ThetaSet,
    ell: LogContrastiveLikelihoods,
    seen: usize,
    table: LikelihoodTable,
}

/// Greedy one-step baseline: scores every candidate design by a PCE-style
/// information estimate in which both the outcome-generating parameter and
/// the contrastive average use prior particles reweighted by their history
/// likelihoods (SNIS). No posterior is fitted.
pub struct MyopicSnisPolicy {
    config: MyopicConfig,
    candidates: Option<Vec<Design>>,
    state: Option<RolloutState>,
}

impl MyopicSnisPolicy {
    /// Scores every index of a discrete design space.
    pub fn new(config: MyopicConfig) -> Self {
        Self {
            config,
            candidates: None,
            state: None,
        }
    }

    /// Scores only the given candidates (any design space).
    pub fn with_candidates(config: MyopicConfig, candidates: Vec<Design>) -> Self {
        Self {
            config,
            candidates: Some(candidates),
            state: None,
        }
    }

    fn candidates(&self, model: &Model) -> Result<Vec<Design>, PolicyError> {
        if let Some(c) = &self.candidates {
            return Ok(c.clone());
        }
        match model.design_space() {
            DesignSpace::Indices { first, last } => Ok((first..=last).map(Design::Discrete).collect()),
            DesignSpace::Box { .. } => Err(PolicyError(format!(
                "myopic-snis needs a discrete design space or explicit candidates; {} is continuous",
                model.id()
            ))),
        }
    }

    fn init_state(&self, model: &Model, candidates: &[Design], rng: &mut StreamRng) -> Result<RolloutState, PolicyError> {
        let particles = model.sample_prior_set(self.config.n_particles, rng);
        let table = if model.id() == ModelId::Prey {
            let prey = model.prey().expect("prey parameters");
            let mut probs = Vec::with_capacity(particles.len() * candidates.len());
            for theta in particles.iter() {
                for d in candidates {
                    let n0 = d.as_discrete().ok_or_else(|| PolicyError("prey designs are indices".into()))?;
                    probs.push(prey.consumption_probability(theta, n0)?);
                }
            }
            LikelihoodTable::Prey {
                probs,
                n_candidates: candidates.len(),
            }
        } else {
            LikelihoodTable::Direct
        };
        Ok(RolloutState {
            ell: LogContrastiveLikelihoods::new(particles.len()),
            particles,
            seen: 0,
            table,
        })
    }

    /// Scores of `candidates` given the current particle weights, with common
    /// random numbers across candidates.
    pub fn scores(
        &self,
        model: &Model,
        candidates: &[Design],
        particles: &ThetaSet,
        log_weights: &[f64],
        seed: u64,
    ) -> Result<Vec<f64>, PolicyError> {
        score_candidates(model, candidates, particles, log_weights, &LikelihoodTable::Direct, self.config.n_outer, seed)
    }
}

fn score_candidates(
    model: &Model,
    candidates: &[Design],
    particles: &ThetaSet,
    log_weights: &[f64],
    table: &LikelihoodTable,
    n_outer: usize,
    seed: u64,
) -> Result<Vec<f64>, PolicyError> {
    let n = particles.len();
    let weights: Vec<f64> = log_weights.iter().map(|w| w.exp()).collect();
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for w in &weights {
        acc += w;
        cumulative.push(acc);
    }
    let mut ell = vec![0.0; n];
    let mut terms = vec![0.0; n];
    let mut scores = Vec::with_capacity(candidates.len());
    for (j, design) in candidates.iter().enumerate() {
        let mut rng = StreamRng::seed_from_u64(seed);
        let mut total = 0.0;
        for _ in 0..n_outer {
            let u: f64 = rng.random::<f64>() * acc;
            let idx = cumulative.partition_point(|&c| c <= u).min(n - 1);
            match table {
                LikelihoodTable::Direct => {
                    let y = model.sample_outcome(particles.get(idx), design, &mut rng)?;
                    model.log_likelihoods(particles, design, y, &mut ell)?;
                }
                LikelihoodTable::Prey { probs, n_candidates } => {
                    let n0 = design.as_discrete().unwrap_or(0);
                    let p = probs[idx * n_candidates + j];
                    let y = rand_distr::Binomial::new(n0 as u64, p)
                        .map_err(|e| PolicyError(e.to_string()))
                        .map(|b| rng.sample(b) as usize)?;
                    for (l, e) in ell.iter_mut().enumerate() {
                        *e = binomial_log_pmf(n0, y, probs[l * n_candidates + j]);
                    }
                }
            }
            for ((t, lw), e) in terms.iter_mut().zip(log_weights).zip(&ell) {
                *t = lw + e;
            }
            total += ell[idx] - log_sum_exp(&terms);
        }
        scores.push(total / n_outer as f64);
    }
    Ok(scores)
}

impl DesignPolicy for MyopicSnisPolicy {
    fn name(&self) -> String {
        "myopic-snis".into()
    }

    fn begin_rollout(&mut self) {
        self.state = None;
    }

    fn propose(&mut self, model: &Model, history: &History, rng: &mut StreamRng) -> Result<Design, PolicyError> {
        let candidates = self.candidates(model)?;
        if self.state.as_ref().is_none_or(|s| s.seen > history.len()) {
            self.state = Some(self.init_state(model, &candidates, rng)?);
        }
        let state = self.state.as_mut().expect("state initialised above");
        let mut scratch = Vec::new();
        for (d, y) in history.iter().skip(state.seen) {
            state.ell.update(model, &state.particles, d, y, &mut scratch)?;
        }
        state.seen = history.len();

        let weighted = posterior_snis(&state.particles, state.ell.values()).map_err(|e| PolicyError(e.to_string()))?;
        if weighted.ess < self.config.min_ess {
            return Err(PolicyError(format!(
                "particle weights degenerated (ESS {:.2} < {}); increase n_particles above {}",
                weighted.ess, self.config.min_ess, self.config.n_particles
            )));
        }
        let log_weights: Vec<f64> = weighted.weights.iter().map(|w| w.ln()).collect();
        let seed: u64 = rng.random();
        let scores = score_candidates(
            model,
            &candidates,
            &state.particles,
            &log_weights,
            &state.table,
            self.config.n_outer,
            seed,
        )?;
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        Ok(candidates[best].clone())
    }
}
