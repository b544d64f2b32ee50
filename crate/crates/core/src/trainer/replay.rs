use std::collections::VecDeque;

use rand::Rng;

use super::TrainError;
use crate::estimators::History;
use crate::models::{Design, Model};

/// One complete episode. θ₀ is never stored: the learner only needs the
/// history, the rewards computed at collection time and the network inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredEpisode {
    pub history: History,
    pub rewards: Vec<f64>,
    /// `model.features(d_t, y_t)` per step, row-major.
    pub features: Vec<f64>,
    pub feature_dim: usize,
}

impl StoredEpisode {
    pub fn new(model: &Model, history: History, rewards: Vec<f64>) -> Self {
        assert_eq!(history.len(), rewards.len());
        let feature_dim = model.feature_dim();
        let mut features = Vec::with_capacity(history.len() * feature_dim);
        for (d, y) in history.iter() {
            features.extend(model.features(d, y));
        }
        Self {
            history,
            rewards,
            features,
            feature_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Index of transition `t` (0-based) of a stored episode: state `h_t`,
/// action `d_{t+1}`, reward `r_{t+1}`, next state `h_{t+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchItem {
    pub episode: usize,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub history: History,
    pub design: Design,
    pub reward: f64,
    pub next_history: History,
    pub done: bool,
}

/// Ring buffer of whole episodes with a capacity counted in transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<StoredEpisode>,
    transitions: usize,
    evicted: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            episodes: VecDeque::new(),
            transitions: 0,
            evicted: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn len_transitions(&self) -> usize {
        self.transitions
    }

    /// Number of episodes evicted so far.
    pub fn evicted(&self) -> usize {
        self.evicted
    }

    pub fn episode(&self, i: usize) -> &StoredEpisode {
        &self.episodes[i]
    }

    /// Appends an episode, evicting the oldest whole episodes to stay within capacity.
    pub fn push(&mut self, episode: StoredEpisode) {
        while !self.episodes.is_empty() && self.transitions + episode.len() > self.capacity {
            let old = self.episodes.pop_front().expect("non-empty");
            self.transitions -= old.len();
            self.evicted += 1;
        }
        self.transitions += episode.len();
        self.episodes.push_back(episode);
    }

    /// `batch_size` transitions drawn uniformly (with replacement) over all stored steps.
    pub fn sample_batch<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<BatchItem>, TrainError> {
        if self.transitions == 0 {
            return Err(TrainError::EmptyBuffer);
        }
        if batch_size > self.transitions {
            return Err(TrainError::BatchTooLarge {
                requested: batch_size,
                stored: self.transitions,
            });
        }
        let mut offsets = Vec::with_capacity(self.episodes.len());
        let mut acc = 0;
        for e in &self.episodes {
            acc += e.len();
            offsets.push(acc);
        }
        Ok((0..batch_size)
            .map(|_| {
                let k = rng.random_range(0..self.transitions);
                let episode = offsets.partition_point(|&o| o <= k);
                let start = if episode == 0 { 0 } else { offsets[episode - 1] };
                BatchItem { episode, t: k - start }
            })
            .collect())
    }

    /// Every transition of `n_episodes` episodes drawn uniformly with replacement.
    pub fn sample_episodes<R: Rng + ?Sized>(&self, n_episodes: usize, rng: &mut R) -> Result<Vec<BatchItem>, TrainError> {
        if self.episodes.is_empty() {
            return Err(TrainError::EmptyBuffer);
        }
        let mut items = Vec::new();
        for _ in 0..n_episodes {
            let episode = rng.random_range(0..self.episodes.len());
            items.extend((0..self.episodes[episode].len()).map(|t| BatchItem { episode, t }));
        }
        Ok(items)
    }

    pub fn transition(&self, item: BatchItem) -> Transition {
        let e = &self.episodes[item.episode];
        Transition {
            history: e.history.prefix(item.t),
            design: e.history.designs()[item.t].clone(),
            reward: e.rewards[item.t],
            next_history: e.history.prefix(item.t + 1),
            done: item.t + 1 == e.len(),
        }
    }
}
