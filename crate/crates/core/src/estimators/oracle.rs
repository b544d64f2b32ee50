//! Nested-quadrature EIG for the one-source, one-dimensional source model.
//!
//! With a Gaussian observation of fixed std the conditional entropy does not
//! depend on θ, so `EIG(d) = H[p(y | d)] − ½ log(2πeσ²)`. The marginal is a
//! θ-quadrature mixture of Gaussians and the entropy a trapezoid over `y`.
//!
//! The intensity has a spike of width `√m` at `θ = d`, so θ nodes are placed
//! with `θ = d + c·sinh(u)` on a uniform `u` grid, which puts most nodes near
//! the spike while still reaching `±4` prior stds.

use std::f64::consts::{E, PI};

use super::EstimatorError;
use crate::models::SourceModel;

const PRIOR_HALF_WIDTH: f64 = 4.0;
const Y_PAD_STDS: f64 = 6.0;
const MAX_TAIL_MASS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleGrid {
    pub n_theta: usize,
    pub n_y: usize,
    /// Scale `c` of the sinh node map.
    pub theta_scale: f64,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            n_theta: 2000,
            n_y: 2000,
            theta_scale: 1e-3,
        }
    }
}

impl OracleGrid {
    pub fn doubled(self) -> Self {
        Self {
            n_theta: 2 * self.n_theta,
            n_y: 2 * self.n_y,
            ..self
        }
    }
}

fn trapezoid_weight(i: usize, n: usize, h: f64) -> f64 {
    if i == 0 || i + 1 == n {
        0.5 * h
    } else {
        h
    }
}

pub fn eig_1d_oracle(model: &SourceModel, design: f64, grid: OracleGrid) -> Result<f64, EstimatorError> {
    if model.dim != 1 || model.k != 1 {
        return Err(EstimatorError::InvalidSetting(format!(
            "the quadrature oracle needs one source in one dimension, got k = {}, dim = {}",
            model.k, model.dim
        )));
    }
    if grid.n_theta < 16 || grid.n_y < 16 || grid.theta_scale <= 0.0 {
        return Err(EstimatorError::GridTooSmall(format!(
            "need at least 16 nodes per axis and a positive scale, got {grid:?}"
        )));
    }

    // θ nodes and prior weights
    let c = grid.theta_scale;
    let u_lo = ((-PRIOR_HALF_WIDTH - design) / c).asinh();
    let u_hi = ((PRIOR_HALF_WIDTH - design) / c).asinh();
    let hu = (u_hi - u_lo) / (grid.n_theta - 1) as f64;
    let norm = (2.0 * PI).sqrt().recip();
    let mut means = Vec::with_capacity(grid.n_theta);
    let mut weights = Vec::with_capacity(grid.n_theta);
    for i in 0..grid.n_theta {
        let u = u_lo + hu * i as f64;
        let theta = design + c * u.sinh();
        let jac = c * u.cosh();
        weights.push(norm * (-0.5 * theta * theta).exp() * jac * trapezoid_weight(i, grid.n_theta, hu));
        means.push(model.intensity(&[theta], &[design]).ln());
    }
    let prior_mass: f64 = weights.iter().sum();
    if 1.0 - prior_mass > MAX_TAIL_MASS {
        return Err(EstimatorError::GridTooSmall(format!(
            "θ grid captures prior mass {prior_mass:.6}"
        )));
    }
    for w in &mut weights {
        *w /= prior_mass;
    }

    // y grid and marginal density
    let sigma = model.sigma;
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min) - Y_PAD_STDS * sigma;
    let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + Y_PAD_STDS * sigma;
    let hy = (hi - lo) / (grid.n_y - 1) as f64;
    let inv_two_var = 0.5 / (sigma * sigma);
    let gauss_norm = (sigma * (2.0 * PI).sqrt()).recip();
    let mut mass = 0.0;
    let mut neg_entropy = 0.0;
    for i in 0..grid.n_y {
        let y = lo + hy * i as f64;
        let p: f64 = means
            .iter()
            .zip(&weights)
            .map(|(mu, w)| {
                let z = y - mu;
                w * (-z * z * inv_two_var).exp()
            })
            .sum::<f64>()
            * gauss_norm;
        let wy = trapezoid_weight(i, grid.n_y, hy);
        mass += wy * p;
        if p > 0.0 {
            neg_entropy += wy * p * p.ln();
        }
    }
    if (1.0 - mass).abs() > MAX_TAIL_MASS {
        return Err(EstimatorError::GridTooSmall(format!("outcome grid captures mass {mass:.6}")));
    }
    let conditional_entropy = 0.5 * (2.0 * PI * E * sigma * sigma).ln();
    Ok(-neg_entropy - conditional_entropy)
}

/// Designs `-bound, -bound + step, …, bound`.
pub fn design_grid(bound: f64, step: f64) -> Vec<f64> {
    let n = (2.0 * bound / step).round() as usize;
    (0..=n).map(|i| -bound + step * i as f64).collect()
}

/// Grid argmax of the oracle. Values within `1e-9` relative of the best
/// count as ties, resolved toward the smallest `|d|` and then toward `d ≥ 0`.
pub fn grid_search_optimal_design_1d(
    model: &SourceModel,
    designs: &[f64],
    grid: OracleGrid,
) -> Result<(f64, f64), EstimatorError> {
    if designs.is_empty() {
        return Err(EstimatorError::InvalidSetting("empty design grid".into()));
    }
    let values = designs
        .iter()
        .map(|&d| eig_1d_oracle(model, d, grid))
        .collect::<Result<Vec<_>, _>>()?;
    let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * best.abs().max(1.0);
    let (idx, _) = designs
        .iter()
        .enumerate()
        .filter(|(i, _)| values[*i] >= best - tol)
        .min_by(|(_, a), (_, b)| {
            a.abs()
                .total_cmp(&b.abs())
                .then_with(|| (**a < 0.0).cmp(&(**b < 0.0)))
        })
        .unwrap();
    Ok((designs[idx], values[idx]))
}
