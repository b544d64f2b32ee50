//! Sequential Bayesian experimental design cast as a hidden-parameter MDP.
//!
//! The crate is organised bottom-up:
//!
//! * [`autodiff`] — reverse-mode tape, MLPs, Adam and checkpoints.
//! * [`models`] — generative experiment models (priors, likelihoods, design spaces).
//! * [`estimators`] — contrastive information bounds, the 1-D quadrature oracle and SNIS.
//! * [`sedmdp`] — the episodic environment with dense marginal-information rewards.
//! * [`agents`] — history encoder, policies, critics and baselines.
//! * [`trainer`] — ensemble actor-critic training from replayed histories.

pub mod agents;
pub mod autodiff;
pub mod estimators;
pub mod models;
pub mod rng;
pub mod sedmdp;
pub mod special;
pub mod trainer;
