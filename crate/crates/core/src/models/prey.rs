use once_cell::sync::Lazy;
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use super::ModelError;

/// Number of fixed RK4 steps over the 24 hour horizon (step 0.1 h).
pub const RK4_STEPS: usize = 240;
pub const HORIZON_HOURS: f64 = 24.0;
pub const MAX_POPULATION: usize = 300;

/// Holling type-II predation on a prey population, observed as a binomial
/// count of individuals consumed.
///
/// Theta layout: `[attack_rate, handling_time]`. Designs are the initial
/// population `N0 ∈ {1, …, 300}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreyModel {
    pub log_mean: f64,
    pub log_std: f64,
}

impl Default for PreyModel {
    fn default() -> Self {
        Self {
            log_mean: -1.4,
            log_std: 1.35,
        }
    }
}

static LN_FACTORIAL: Lazy<Vec<f64>> = Lazy::new(|| {
    let mut t = vec![0.0; MAX_POPULATION + 1];
    for i in 1..=MAX_POPULATION {
        t[i] = t[i - 1] + (i as f64).ln();
    }
    t
});

/// Population left after the horizon, `dN/dτ = −aN² / (1 + a·T_h·N²)`,
/// integrated by classic RK4 with 240 steps of 0.1 and clamped to `[0, N0]`.
pub fn integrate_prey_ode(attack_rate: f64, handling_time: f64, n0: f64) -> Result<f64, ModelError> {
    if !attack_rate.is_finite() || !handling_time.is_finite() || !n0.is_finite() {
        return Err(ModelError::InvalidParameters(format!(
            "non-finite prey parameters a={attack_rate}, T_h={handling_time}, N0={n0}"
        )));
    }
    if attack_rate < 0.0 || handling_time < 0.0 {
        return Err(ModelError::InvalidParameters(format!(
            "prey parameters must be non-negative, got a={attack_rate}, T_h={handling_time}"
        )));
    }
    if attack_rate == 0.0 {
        return Ok(n0);
    }
    let h = HORIZON_HOURS / RK4_STEPS as f64;
    let f = |n: f64| {
        let an2 = attack_rate * n * n;
        -an2 / (1.0 + handling_time * an2)
    };
    let mut n = n0;
    for _ in 0..RK4_STEPS {
        let k1 = f(n);
        let k2 = f(n + 0.5 * h * k1);
        let k3 = f(n + 0.5 * h * k2);
        let k4 = f(n + h * k3);
        n += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    Ok(n.clamp(0.0, n0))
}

/// `ln C(n, k) + k ln p + (n−k) ln(1−p)` with the `p ∈ {0, 1}` edges handled exactly.
pub fn binomial_log_pmf(n: usize, k: usize, p: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let lf = &*LN_FACTORIAL;
    let log_choose = lf[n] - lf[k] - lf[n - k];
    let (kf, rest) = (k as f64, (n - k) as f64);
    let success = if k == 0 { 0.0 } else if p <= 0.0 { f64::NEG_INFINITY } else { kf * p.ln() };
    let failure = if k == n { 0.0 } else if p >= 1.0 { f64::NEG_INFINITY } else { rest * (-p).ln_1p() };
    log_choose + success + failure
}

impl PreyModel {
    pub const THETA_DIM: usize = 2;

    pub fn consumption_probability(&self, theta: &[f64], n0: usize) -> Result<f64, ModelError> {
        let n0f = n0 as f64;
        let remaining = integrate_prey_ode(theta[0], theta[1], n0f)?;
        Ok(((n0f - remaining) / n0f).clamp(0.0, 1.0))
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let za: f64 = rng.sample(StandardNormal);
        let zt: f64 = rng.sample(StandardNormal);
        vec![
            (self.log_mean + self.log_std * za).exp(),
            (self.log_mean + self.log_std * zt).exp(),
        ]
    }

    pub fn log_likelihood(&self, theta: &[f64], n0: usize, y: usize) -> Result<f64, ModelError> {
        let p = self.consumption_probability(theta, n0)?;
        Ok(binomial_log_pmf(n0, y, p))
    }

    pub fn sample_outcome<R: Rng + ?Sized>(&self, theta: &[f64], n0: usize, rng: &mut R) -> Result<usize, ModelError> {
        let p = self.consumption_probability(theta, n0)?;
        let dist = Binomial::new(n0 as u64, p)
            .map_err(|e| ModelError::InvalidParameters(format!("binomial({n0}, {p}): {e}")))?;
        Ok(dist.sample(rng) as usize)
    }
}
