//! Ensemble actor-critic training on replayed histories.
//!
//! Each iteration collects one episode with the stochastic policy under a
//! fresh prior draw, stores it whole, then runs one critic and one actor
//! update per collected step. Prefix summaries are re-encoded with the
//! current encoders at every update.

mod learner;
mod replay;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use learner::{normalized_action, ActorStats, Learner, LearnerConfig, PreparedBatch};
pub use replay::{BatchItem, ReplayBuffer, StoredEpisode, Transition};

use crate::agents::{save_policy, Actor, AgentError, Architecture, CriticEnsemble, PolicyKind};
use crate::autodiff::{AutodiffError, CheckpointMeta};
use crate::estimators::mean_stderr;
use crate::models::{Model, ModelId};
use crate::rng::{RolloutStreams, StreamRng};
use crate::sedmdp::{EnvConfig, EnvError, EpisodeContext, RewardMode};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("batch of {requested} transitions requested but only {stored} are stored")]
    BatchTooLarge { requested: usize, stored: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("iteration {iteration}: {source}")]
    At { iteration: usize, source: Box<TrainError> },
    #[error("writing outputs: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(format!("unknown profile {other:?} (expected paper or desk)")),
        }
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchMode {
    /// Every step of whole episodes drawn uniformly; shares prefix encodings.
    Episodes,
    /// Transitions drawn uniformly over all stored steps.
    Uniform,
}

/// Published per-problem hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HyperparameterRow {
    pub n_critics: usize,
    pub m_subset: usize,
    pub iterations: usize,
    pub contrastive: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub target_rate: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub buffer_size: usize,
}

impl HyperparameterRow {
    /// `(parameter, value)` pairs in the published notation, e.g. `("tau", "1e-3")`.
    pub fn table_entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("N", compact(self.n_critics as f64)),
            ("M", compact(self.m_subset as f64)),
            ("training iterations", compact(self.iterations as f64)),
            ("contrastive samples", compact(self.contrastive as f64)),
            ("T", compact(self.horizon as f64)),
            ("gamma", compact(self.gamma)),
            ("tau", compact(self.target_rate)),
            ("policy learning rate", compact(self.actor_lr)),
            ("critic learning rate", compact(self.critic_lr)),
            ("buffer size", compact(self.buffer_size as f64)),
        ]
    }
}

/// `m·10^k` with a single-digit `m` and `|k| >= 3` prints as `{m}e{k}`; anything else as plain decimal.
pub fn compact(x: f64) -> String {
    if x != 0.0 {
        let k = x.abs().log10().floor() as i32;
        if k.abs() >= 3 {
            let m = x / 10f64.powi(k);
            if (m - m.round()).abs() < 1e-9 {
                return format!("{}e{}", m.round() as i64, k);
            }
        }
    }
    format!("{x}")
}

/// Source / CES / prey rows of the published table. The one-dimensional
/// source toy and the linear-Gaussian model reuse the source row with `T = 2`.
pub fn hyperparameter_row(model: ModelId) -> HyperparameterRow {
    let source = HyperparameterRow {
        n_critics: 2,
        m_subset: 2,
        iterations: 20_000,
        contrastive: 100_000,
        horizon: 30,
        gamma: 0.9,
        target_rate: 1e-3,
        actor_lr: 1e-4,
        critic_lr: 3e-4,
        buffer_size: 10_000_000,
    };
    match model {
        ModelId::Source => source,
        ModelId::Source1d | ModelId::LinGauss => HyperparameterRow { horizon: 2, ..source },
        ModelId::Ces => HyperparameterRow {
            n_critics: 2,
            m_subset: 2,
            iterations: 20_000,
            contrastive: 100_000,
            horizon: 10,
            gamma: 0.9,
            target_rate: 5e-3,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            buffer_size: 1_000_000,
        },
        ModelId::Prey => HyperparameterRow {
            n_critics: 10,
            m_subset: 2,
            iterations: 40_000,
            contrastive: 10_000,
            horizon: 10,
            gamma: 0.95,
            target_rate: 1e-2,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            buffer_size: 1_000_000,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelId,
    pub profile: Profile,
    pub seed: u64,
    pub n_critics: usize,
    pub m_subset: usize,
    pub iterations: usize,
    pub contrastive: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub target_rate: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub init_alpha: f64,
    /// Defaults to `−action_dim` (continuous) or `½ log |A|` (discrete).
    pub target_entropy: Option<f64>,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub batch_mode: BatchMode,
    pub updates_per_step: usize,
    pub reward_mode: RewardMode,
    pub log_every: usize,
    pub architecture: Architecture,
}

impl TrainConfig {
    /// Table defaults; the desk profile divides iterations by 10 and the
    /// training `L` by 100 (at least 1000).
    pub fn for_model(model: ModelId, profile: Profile) -> Self {
        let row = hyperparameter_row(model);
        let (iterations, contrastive) = match profile {
            Profile::Paper => (row.iterations, row.contrastive),
            Profile::Desk => (row.iterations / 10, (row.contrastive / 100).max(1000)),
        };
        Self {
            model,
            profile,
            seed: 0,
            n_critics: row.n_critics,
            m_subset: row.m_subset,
            iterations,
            contrastive,
            horizon: row.horizon,
            gamma: row.gamma,
            target_rate: row.target_rate,
            actor_lr: row.actor_lr,
            critic_lr: row.critic_lr,
            alpha_lr: 3e-4,
            init_alpha: 0.1,
            target_entropy: None,
            buffer_size: row.buffer_size,
            batch_size: 256,
            batch_mode: BatchMode::Episodes,
            updates_per_step: 1,
            reward_mode: RewardMode::Dense,
            log_every: 10,
            architecture: Architecture::default(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.n_critics < 2 {
            return bad(format!("n_critics must be >= 2, got {}", self.n_critics));
        }
        if self.m_subset < 2 || self.m_subset > self.n_critics {
            return bad(format!("m_subset must lie in [2, n_critics = {}], got {}", self.n_critics, self.m_subset));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.alpha_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(self.target_rate > 0.0 && self.target_rate <= 1.0) {
            return bad(format!("target_rate must lie in (0, 1], got {}", self.target_rate));
        }
        if !(self.init_alpha > 0.0) {
            return bad(format!("init_alpha must be positive, got {}", self.init_alpha));
        }
        if self.contrastive < 1 || self.horizon < 1 || self.batch_size < 1 || self.log_every < 1 || self.updates_per_step < 1 {
            return bad("contrastive, horizon, batch_size, log_every and updates_per_step must be >= 1".into());
        }
        if self.buffer_size < self.horizon {
            return bad(format!("buffer_size {} cannot hold one episode of {} steps", self.buffer_size, self.horizon));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn resolved_target_entropy(&self, model: &Model) -> f64 {
        self.target_entropy.unwrap_or_else(|| {
            let space = model.design_space();
            if space.is_discrete() {
                0.5 * (space.action_dim() as f64).ln()
            } else {
                -(space.action_dim() as f64)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub iteration: usize,
    pub mean_return: f64,
    pub return_stderr: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TrainError> {
        let mut writer = csv::Writer::from_writer(w);
        for row in &self.rows {
            writer.serialize(row).map_err(|e| std::io::Error::other(e.to_string()))?;
        }
        writer.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    /// Fill the `seconds` column with wall time; off by default so logs are reproducible.
    pub timing: bool,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub learner: Learner,
    pub log: TrainLog,
    pub digest: String,
    /// Undiscounted return of every collected episode.
    pub episode_returns: Vec<f64>,
}

impl TrainResult {
    pub fn actor(&self) -> &Actor {
        &self.learner.actor
    }

    pub fn checkpoint_meta(&self, config: &TrainConfig) -> CheckpointMeta {
        CheckpointMeta::new(config.model.as_str(), self.digest.clone(), config.seed, config.iterations as u64)
            .with("reward_mode", serde_json::to_value(config.reward_mode).expect("serialises"))
            .with("gamma", config.gamma)
            .with("horizon", config.horizon as u64)
            .with("profile", config.profile.to_string())
    }

    pub fn save(&self, config: &TrainConfig, checkpoint: &Path, log: &Path) -> Result<(), TrainError> {
        save_policy(checkpoint, self.actor(), self.checkpoint_meta(config))?;
        self.log.write_csv(std::fs::File::create(log)?)?;
        Ok(())
    }
}

const COLLECT_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

fn learner_rng(seed: u64, salt: u64) -> StreamRng {
    let mut rng = StreamRng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - salt);
    rng
}

/// Collects one episode with the stochastic policy; returns the stored form.
pub fn collect_episode(
    model: &Model,
    actor: &Actor,
    env: EnvConfig,
    streams: &mut RolloutStreams,
) -> Result<StoredEpisode, TrainError> {
    let mut ctx = EpisodeContext::reset(model, env, streams)?;
    let mut summary = actor.empty_summary();
    let mut rewards = Vec::with_capacity(env.horizon);
    while !ctx.done() {
        let action = actor.act(&summary, &mut streams.policy, true);
        let step = ctx.step(&action.design, &mut streams.outcomes)?;
        rewards.push(step.reward);
        actor.update_summary(&mut summary, model, &action.design, step.outcome);
    }
    Ok(StoredEpisode::new(model, ctx.history().clone(), rewards))
}

pub fn train(config: &TrainConfig) -> Result<TrainResult, TrainError> {
    train_with(config, TrainOptions::default(), |_| {})
}

/// Runs the full loop; `on_log` sees every log row as it is produced.
pub fn train_with(
    config: &TrainConfig,
    options: TrainOptions,
    mut on_log: impl FnMut(&TrainLogRow),
) -> Result<TrainResult, TrainError> {
    config.validate()?;
    let model = Model::new(config.model);
    let mut init_rng = learner_rng(config.seed, 0);
    let mut update_rng = learner_rng(config.seed, 1);
    let actor = Actor::new(&model, config.architecture.clone(), &mut init_rng);
    let critics = CriticEnsemble::new(
        model.feature_dim(),
        actor.action_dim(),
        config.n_critics,
        &config.architecture,
        &mut init_rng,
    )?;
    let learner_config = LearnerConfig {
        gamma: config.gamma,
        target_rate: config.target_rate,
        m_subset: config.m_subset,
        actor_lr: config.actor_lr,
        critic_lr: config.critic_lr,
        alpha_lr: config.alpha_lr,
        init_alpha: config.init_alpha,
        target_entropy: config.resolved_target_entropy(&model),
        tune_alpha: true,
    };
    let mut learner = Learner::new(actor, critics, learner_config)?;
    let env = EnvConfig {
        contrastive: config.contrastive,
        horizon: config.horizon,
        reward_mode: config.reward_mode,
        gamma: config.gamma,
    };
    let mut buffer = ReplayBuffer::new(config.buffer_size);
    let mut log = TrainLog::default();
    let mut episode_returns = Vec::with_capacity(config.iterations);
    let (mut critic_losses, mut actor_losses) = (Vec::new(), Vec::new());
    let start = Instant::now();
    let collect_seed = config.seed.wrapping_add(COLLECT_SEED_OFFSET);
    let episodes_per_batch = config.batch_size.div_ceil(config.horizon);

    for iteration in 0..config.iterations {
        let at = |source: TrainError| TrainError::At {
            iteration,
            source: Box::new(source),
        };
        let mut streams = RolloutStreams::new(collect_seed, iteration as u64);
        let episode = collect_episode(&model, &learner.actor, env, &mut streams).map_err(at)?;
        episode_returns.push(episode.total_reward());
        buffer.push(episode);

        if buffer.len_transitions() >= config.batch_size {
            for _ in 0..config.horizon * config.updates_per_step {
                let items = match config.batch_mode {
                    BatchMode::Episodes => buffer.sample_episodes(episodes_per_batch, &mut update_rng),
                    BatchMode::Uniform => buffer.sample_batch(config.batch_size, &mut update_rng),
                }
                .map_err(at)?;
                let batch = learner.prepare(&buffer, &items);
                critic_losses.push(learner.critic_update(&batch, &mut update_rng).map_err(at)?);
                actor_losses.push(learner.actor_update(&batch, &mut update_rng).map_err(at)?.loss);
            }
        }

        if (iteration + 1) % config.log_every == 0 || iteration + 1 == config.iterations {
            let since = episode_returns.len() - (iteration % config.log_every + 1);
            let (mean_return, return_stderr) = mean_stderr(&episode_returns[since..]);
            let mean_or_nan = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
            let row = TrainLogRow {
                iteration: iteration + 1,
                mean_return,
                return_stderr,
                critic_loss: mean_or_nan(&critic_losses),
                actor_loss: mean_or_nan(&actor_losses),
                alpha: learner.alpha(),
                seconds: if options.timing { start.elapsed().as_secs_f64() } else { 0.0 },
            };
            on_log(&row);
            log.rows.push(row);
            critic_losses.clear();
            actor_losses.clear();
        }
    }
    Ok(TrainResult {
        learner,
        log,
        digest: config.digest(),
        episode_returns,
    })
}

/// Kind of policy a model needs.
pub fn policy_kind(model: ModelId) -> PolicyKind {
    if Model::new(model).design_space().is_discrete() {
        PolicyKind::Discrete
    } else {
        PolicyKind::Continuous
    }
}

#[cfg(test)]
mod tests;
