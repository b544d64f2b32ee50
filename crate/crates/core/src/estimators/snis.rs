use serde::{Deserialize, Serialize};

use super::EstimatorError;
use crate::models::ThetaSet;

/// Prior draws reweighted by their history likelihoods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSamples {
    pub thetas: ThetaSet,
    pub weights: Vec<f64>,
    pub ess: f64,
}

impl WeightedSamples {
    /// Weighted mean of each coordinate.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.thetas.dim()];
        for (theta, w) in self.thetas.iter().zip(&self.weights) {
            for (o, t) in out.iter_mut().zip(theta) {
                *o += w * t;
            }
        }
        out
    }
}

pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    s * s / s2
}

/// Self-normalised weights `w_l ∝ exp(ell_l)`.
pub fn posterior_snis(thetas: &ThetaSet, ell: &[f64]) -> Result<WeightedSamples, EstimatorError> {
    if thetas.is_empty() || thetas.len() != ell.len() {
        return Err(EstimatorError::InvalidSetting(format!(
            "need matching non-empty particle and weight sets, got {} and {}",
            thetas.len(),
            ell.len()
        )));
    }
    let max = ell.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || ell.iter().any(|v| v.is_nan()) {
        return Err(EstimatorError::DegenerateWeights);
    }
    let mut weights: Vec<f64> = ell.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let ess = effective_sample_size(&weights);
    Ok(WeightedSamples {
        thetas: thetas.clone(),
        weights,
        ess,
    })
}
