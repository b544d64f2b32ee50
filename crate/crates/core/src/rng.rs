//! Seeded random streams.
//!
//! A rollout with index `i` under seed `s` reads four independent ChaCha8
//! streams: the generating parameter, the contrastive draws, the outcome
//! noise and the policy noise. Consumers that must replay the same rollout
//! (evaluation, the session service) derive the same streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamKind {
    Theta0 = 0,
    Contrastive = 1,
    Outcomes = 2,
    Policy = 3,
}

pub fn stream(seed: u64, index: u64, kind: StreamKind) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_mul(4).wrapping_add(kind as u64));
    rng
}

#[derive(Debug, Clone)]
pub struct RolloutStreams {
    pub theta0: StreamRng,
    pub contrastive: StreamRng,
    pub outcomes: StreamRng,
    pub policy: StreamRng,
}

impl RolloutStreams {
    pub fn new(seed: u64, index: u64) -> Self {
        Self {
            theta0: stream(seed, index, StreamKind::Theta0),
            contrastive: stream(seed, index, StreamKind::Contrastive),
            outcomes: stream(seed, index, StreamKind::Outcomes),
            policy: stream(seed, index, StreamKind::Policy),
        }
    }
}
