use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::autodiff::gaussian_log_density;
use crate::special::{log_ndtr, logit, sigmoid};

/// Constant elasticity of substitution preference model.
///
/// Designs are two baskets `(x, x')` of three goods each in `[0, 100]`.
/// Theta layout: `[rho, alpha_1, alpha_2, alpha_3, u]`.
/// Outcomes are ratings `clip(sigmoid(eta), eps, 1 - eps)`; the clipped ends
/// carry probability atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct CesModel {
    pub tau: f64,
    pub eps: f64,
    pub log_u_mean: f64,
    pub log_u_std: f64,
    pub upper: f64,
}

impl Default for CesModel {
    fn default() -> Self {
        Self {
            tau: 0.005,
            eps: (2.0f64).powi(-22),
            log_u_mean: 1.0,
            log_u_std: 3.0,
            upper: 100.0,
        }
    }
}

/// Location and scale of the latent logit `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaParams {
    pub mean: f64,
    pub std: f64,
}

impl CesModel {
    pub const THETA_DIM: usize = 5;

    /// `(Σ_i α_i x_i^ρ)^(1/ρ)` computed in log space so small `ρ` stays finite.
    pub fn utility(rho: f64, alpha: &[f64], x: &[f64]) -> f64 {
        // Σ α_i x_i^ρ = 1 + Σ α_i (x_i^ρ − 1) because Σ α = 1
        let s: f64 = alpha
            .iter()
            .zip(x)
            .map(|(&a, &xi)| if xi > 0.0 { a * (rho * xi.ln()).exp_m1() } else { -a })
            .sum();
        if s <= -1.0 {
            return 0.0;
        }
        (s.ln_1p() / rho).exp()
    }

    pub fn eta_params(&self, theta: &[f64], design: &[f64]) -> EtaParams {
        let (rho, alpha, u) = (theta[0], &theta[1..4], theta[4]);
        let (x, xp) = design.split_at(3);
        let diff = Self::utility(rho, alpha, x) - Self::utility(rho, alpha, xp);
        let dist: f64 = x.iter().zip(xp).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        EtaParams {
            mean: diff * u,
            std: (1.0 + dist) * self.tau * u,
        }
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        // Beta(1,1) on the open interval
        let rho = loop {
            let r: f64 = rng.random();
            if r > 0.0 {
                break r;
            }
        };
        // Dirichlet(1,1,1) through normalized unit exponentials
        let e: [f64; 3] = [Exp1.sample(rng), Exp1.sample(rng), Exp1.sample(rng)];
        let total: f64 = e.iter().sum();
        let z: f64 = rng.sample(StandardNormal);
        let u = (self.log_u_mean + self.log_u_std * z).exp();
        vec![rho, e[0] / total, e[1] / total, e[2] / total, u]
    }

    pub fn log_likelihood(&self, theta: &[f64], design: &[f64], y: f64) -> f64 {
        let EtaParams { mean, std } = self.eta_params(theta, design);
        if y <= self.eps {
            log_ndtr((logit(self.eps) - mean) / std)
        } else if y >= 1.0 - self.eps {
            log_ndtr(-(logit(1.0 - self.eps) - mean) / std)
        } else {
            gaussian_log_density(logit(y), mean, std) - y.ln() - (-y).ln_1p()
        }
    }

    pub fn sample_outcome<R: Rng + ?Sized>(&self, theta: &[f64], design: &[f64], rng: &mut R) -> f64 {
        let EtaParams { mean, std } = self.eta_params(theta, design);
        let z: f64 = rng.sample(StandardNormal);
        let eta = mean + std * z;
        if eta <= logit(self.eps) {
            self.eps
        } else if eta >= logit(1.0 - self.eps) {
            1.0 - self.eps
        } else {
            sigmoid(eta).clamp(self.eps, 1.0 - self.eps)
        }
    }
}
