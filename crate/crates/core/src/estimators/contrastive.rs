use serde::{Deserialize, Serialize};

use crate::autodiff::log_sum_exp;
use crate::models::{Design, Model, ModelError, ThetaSet};

/// Running `ell_l = Σ_{k≤t} log p(y_k | θ_l, d_k)` for `θ_0..θ_L`, kept in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogContrastiveLikelihoods {
    ell: Vec<f64>,
    step: usize,
}

impl LogContrastiveLikelihoods {
    /// `n` entries (generating parameter plus contrastive draws), all zero.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        Self { ell: vec![0.0; n], step: 0 }
    }

    pub fn from_values(ell: Vec<f64>, step: usize) -> Self {
        Self { ell, step }
    }

    pub fn values(&self) -> &[f64] {
        &self.ell
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn len(&self) -> usize {
        self.ell.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ell.is_empty()
    }

    /// Adds `log p(y | θ_l, d)` to every entry; `scratch` is reused to avoid allocation.
    pub fn update(
        &mut self,
        model: &Model,
        thetas: &ThetaSet,
        design: &Design,
        y: f64,
        scratch: &mut Vec<f64>,
    ) -> Result<(), ModelError> {
        scratch.resize(thetas.len(), 0.0);
        model.log_likelihoods(thetas, design, y, scratch)?;
        for (e, lp) in self.ell.iter_mut().zip(scratch.iter()) {
            *e += lp;
        }
        self.step += 1;
        Ok(())
    }

    pub fn log_sum_exp(&self) -> f64 {
        log_sum_exp(&self.ell)
    }

    pub fn g_lower(&self) -> f64 {
        g_value(&self.ell)
    }

    pub fn g_upper(&self) -> f64 {
        g_upper_value(&self.ell)
    }
}

/// `ell_0 − logsumexp(ell) + log(L+1)`: the sPCE integrand. Never exceeds `log(L+1)`.
pub fn g_value(ell: &[f64]) -> f64 {
    let n = ell.len() as f64;
    ell[0] - log_sum_exp(ell) + n.ln()
}

/// `ell_0 − logsumexp(ell_{1..L}) + log L`: the sNMC integrand (θ_0 left out of the denominator).
pub fn g_upper_value(ell: &[f64]) -> f64 {
    assert!(ell.len() >= 2, "the upper bound needs at least one contrastive sample");
    let rest = &ell[1..];
    ell[0] - log_sum_exp(rest) + (rest.len() as f64).ln()
}
