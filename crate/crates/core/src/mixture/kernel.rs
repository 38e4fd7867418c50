use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::em::EmConfig;
use crate::distribution::{DistributionSpec, Marginal};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, half_log_det, mahalanobis_sq};

/// How component covariances are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelPolicy {
    /// One shared diagonal covariance for every component.
    Homogeneous {
        #[serde(default)]
        scale: HomogeneousScale,
    },
    /// `(d_k / 2)² I`, `d_k` the distance to the nearest other mean.
    Inscribed,
    /// Full per-component covariances from the reduced EM fit.
    Adaptive {
        #[serde(default)]
        em: EmConfig,
    },
}

impl Default for KernelPolicy {
    fn default() -> Self {
        KernelPolicy::Homogeneous {
            scale: HomogeneousScale::Heuristic,
        }
    }
}

/// Scale rule of the homogeneous kernel.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum HomogeneousScale {
    /// `σ² I`.
    Fixed { sigma: f64 },
    /// `diag((K^{-1/q} s_j)²)` with `s_j` the target standard deviations.
    #[default]
    Heuristic,
    /// `diag((c s_j)²)` with `c` minimizing the integrated squared error
    /// between the mixture and the target.
    IseOptimal {
        /// Monte Carlo size for targets without a Gaussian closed form.
        #[serde(default = "default_ise_samples")]
        samples: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_ise_samples() -> usize {
    20_000
}

impl HomogeneousScale {
    pub fn ise_optimal() -> Self {
        HomogeneousScale::IseOptimal {
            samples: default_ise_samples(),
            seed: 0,
        }
    }
}

/// `K^{-1/q}`.
pub fn heuristic_factor(k: usize, q: usize) -> f64 {
    (k as f64).powf(-1.0 / q as f64)
}

pub(crate) fn scaled_diagonal(std: &DVector<f64>, factor: f64) -> DMatrix<f64> {
    DMatrix::from_diagonal(&std.map(|s| (factor * s).powi(2)))
}

/// `d_k`: distance from each mean to its nearest neighbour.
pub fn nearest_neighbour_distances(means: &[DVector<f64>]) -> Vec<f64> {
    means
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            means
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| (a - b).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Gaussian form of the target, when it has one.
fn gaussian_target(target: &DistributionSpec) -> Option<(DVector<f64>, DMatrix<f64>)> {
    match target {
        DistributionSpec::MultivariateGaussian { .. } => Some((target.mean(), target.covariance())),
        DistributionSpec::IndependentMarginals { marginals } => marginals
            .iter()
            .all(|m| matches!(m, Marginal::Normal { .. }))
            .then(|| (target.mean(), target.covariance())),
    }
}

fn log_gauss(d: &DVector<f64>, l: &DMatrix<f64>) -> f64 {
    -half_log_det(l) - 0.5 * d.len() as f64 * (2.0 * PI).ln() - 0.5 * mahalanobis_sq(l, d)
}

/// Integrated squared error `∫ p_mix² − 2 E_target[p_mix]` (the constant
/// `∫ p_target²` is dropped) of the equal-weight mixture with covariance
/// `diag((c s_j)²)`.
pub fn homogeneous_ise(
    means: &[DVector<f64>],
    std: &DVector<f64>,
    factor: f64,
    target: &DistributionSpec,
    samples: &[DVector<f64>],
) -> f64 {
    let k = means.len() as f64;
    let cov = scaled_diagonal(std, factor);
    let l2 = cholesky_lower(&(&cov * 2.0)).expect("positive diagonal");
    let overlap: f64 = means
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let mut s = 0.5 * log_gauss(&DVector::zeros(a.len()), &l2).exp();
            for b in &means[i + 1..] {
                s += log_gauss(&(a - b), &l2).exp();
            }
            2.0 * s
        })
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        / (k * k);
    let cross = match gaussian_target(target) {
        Some((m, s)) => {
            let l = cholesky_lower(&(s + &cov)).expect("sum of positive definite matrices");
            means.iter().map(|mu| log_gauss(&(mu - &m), &l).exp()).sum::<f64>() / k
        }
        None => {
            let lc = cholesky_lower(&cov).expect("positive diagonal");
            let vals: Vec<f64> = samples
                .par_iter()
                .map(|x| means.iter().map(|mu| log_gauss(&(x - mu), &lc).exp()).sum::<f64>() / k)
                .collect();
            vals.iter().sum::<f64>() / samples.len() as f64
        }
    };
    overlap - 2.0 * cross
}

/// Minimizes [`homogeneous_ise`] over the factor `c`: a log-spaced scan
/// around `K^{-1/q}` followed by golden-section refinement in `log c`.
pub fn ise_optimal_factor(means: &[DVector<f64>], target: &DistributionSpec, samples: usize, seed: u64) -> Result<f64> {
    if means.is_empty() {
        return Err(Error::invalid("points", "no rep-points"));
    }
    let q = target.dimension();
    let std = target.axis_std();
    let aux = if gaussian_target(target).is_some() {
        Vec::new()
    } else {
        if samples == 0 {
            return Err(Error::invalid(
                "samples",
                "ISE needs Monte Carlo samples for this target",
            ));
        }
        let sampler = target.sampler()?;
        sampler.sample_n(&mut ChaCha8Rng::seed_from_u64(seed), samples)
    };
    let f = |log_c: f64| homogeneous_ise(means, &std, log_c.exp(), target, &aux);
    let centre = heuristic_factor(means.len(), q).ln();
    let (lo, hi) = (centre + (0.05f64).ln(), centre + 20f64.ln());
    let n = 48;
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v < values[b] { i } else { b });
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n - 1)]);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    Ok((0.5 * (a + b)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn corners_of_unit_square() {
        let means: Vec<DVector<f64>> = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
            .iter()
            .map(|&(a, b)| DVector::from_vec(vec![a, b]))
            .collect();
        assert_eq!(nearest_neighbour_distances(&means), vec![1.0; 4]);
    }

    #[test]
    fn ise_matches_quadrature_in_one_dimension() {
        let means: Vec<DVector<f64>> = [-1.0, 0.2, 1.5].iter().map(|&m| DVector::from_element(1, m)).collect();
        let target = DistributionSpec::standard_normal(1);
        let std = target.axis_std();
        let c = 0.7;
        let closed = homogeneous_ise(&means, &std, c, &target, &[]);
        let pdf = |x: f64, m: f64, s: f64| (-(x - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt());
        let h = 1e-3;
        let mut quad = 0.0;
        for i in 0..20_000 {
            let x = -10.0 + i as f64 * h;
            let p: f64 = means.iter().map(|m| pdf(x, m[0], c)).sum::<f64>() / 3.0;
            quad += (p * p - 2.0 * p * pdf(x, 0.0, 1.0)) * h;
        }
        assert_relative_eq!(closed, quad, epsilon = 1e-8);
    }

    #[test]
    fn monte_carlo_cross_term_agrees_with_closed_form() {
        let means: Vec<DVector<f64>> = (0..5)
            .map(|i| DVector::from_vec(vec![i as f64 * 0.4 - 0.8, 0.1]))
            .collect();
        let gaussian = DistributionSpec::standard_normal(2);
        let shifted = DistributionSpec::independent(vec![
            Marginal::Uniform {
                lower: -3f64.sqrt(),
                upper: 3f64.sqrt(),
            },
            Marginal::Uniform {
                lower: -3f64.sqrt(),
                upper: 3f64.sqrt(),
            },
        ]);
        let c_gauss = ise_optimal_factor(&means, &gaussian, 0, 0).unwrap();
        let c_unif = ise_optimal_factor(&means, &shifted, 20_000, 1).unwrap();
        assert!(c_gauss > 0.0 && c_unif > 0.0);
    }
}
