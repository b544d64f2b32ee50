use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::gaussian_log_density;

/// Scalar linear-Gaussian validation model `y = θ·d + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinGaussModel {
    pub prior_var: f64,
    pub noise_var: f64,
    pub bound: f64,
}

impl Default for LinGaussModel {
    fn default() -> Self {
        Self {
            prior_var: 1.0,
            noise_var: 1.0,
            bound: 3.0,
        }
    }
}

impl LinGaussModel {
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: f64 = rng.sample(StandardNormal);
        vec![self.prior_var.sqrt() * z]
    }

    pub fn log_likelihood(&self, theta: &[f64], d: f64, y: f64) -> f64 {
        gaussian_log_density(y, theta[0] * d, self.noise_var.sqrt())
    }

    pub fn sample_outcome<R: Rng + ?Sized>(&self, theta: &[f64], d: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        theta[0] * d + self.noise_var.sqrt() * z
    }

    /// Conjugate posterior `(mean, variance)` of θ after observing `(d_t, y_t)` pairs.
    pub fn posterior(&self, designs: &[f64], outcomes: &[f64]) -> (f64, f64) {
        let precision = 1.0 / self.prior_var + designs.iter().map(|d| d * d).sum::<f64>() / self.noise_var;
        let weighted: f64 = designs.iter().zip(outcomes).map(|(d, y)| d * y).sum::<f64>() / self.noise_var;
        (weighted / precision, 1.0 / precision)
    }
}

/// Expected information gain of one experiment with design scale `d`:
/// `½ log(1 + d²·prior_var / noise_var)`.
pub fn eig_closed_form_lingauss(d: f64, prior_var: f64, noise_var: f64) -> f64 {
    0.5 * (d * d * prior_var / noise_var).ln_1p()
}

/// Total EIG of a fixed sequence of designs (the information adds in precision).
pub fn eig_closed_form_lingauss_sequence(designs: &[f64], prior_var: f64, noise_var: f64) -> f64 {
    let s: f64 = designs.iter().map(|d| d * d).sum();
    0.5 * (s * prior_var / noise_var).ln_1p()
}
