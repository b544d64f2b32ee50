use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::gaussian_log_density;

/// Point sources of signal in `dim` dimensions; the observation is the
/// log of the total intensity plus Gaussian noise.
///
/// Theta layout: `k` consecutive points of `dim` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel {
    pub dim: usize,
    pub k: usize,
    /// background signal
    pub b: f64,
    /// maximum signal
    pub m: f64,
    /// observation noise std on the log-intensity
    pub sigma: f64,
    /// half-width of the design box `[-bound, bound]^dim`
    pub bound: f64,
}

impl SourceModel {
    pub fn two_sources_2d() -> Self {
        Self {
            dim: 2,
            k: 2,
            b: 0.1,
            m: 1e-4,
            sigma: 0.5,
            bound: 4.0,
        }
    }

    pub fn single_source_1d() -> Self {
        Self {
            dim: 1,
            k: 1,
            ..Self::two_sources_2d()
        }
    }

    pub fn theta_dim(&self) -> usize {
        self.dim * self.k
    }

    /// Total intensity `b + Σ_i 1 / (m + ‖θ_i − d‖²)`.
    pub fn intensity(&self, theta: &[f64], design: &[f64]) -> f64 {
        let mut mu = self.b;
        for source in theta.chunks_exact(self.dim) {
            let sq: f64 = source.iter().zip(design).map(|(t, d)| (t - d) * (t - d)).sum();
            mu += 1.0 / (self.m + sq);
        }
        mu
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.theta_dim()).map(|_| rng.sample(StandardNormal)).collect()
    }

    pub fn log_likelihood(&self, theta: &[f64], design: &[f64], log_intensity: f64) -> f64 {
        gaussian_log_density(log_intensity, self.intensity(theta, design).ln(), self.sigma)
    }

    pub fn sample_outcome<R: Rng + ?Sized>(&self, theta: &[f64], design: &[f64], rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.intensity(theta, design).ln() + self.sigma * z
    }
}
