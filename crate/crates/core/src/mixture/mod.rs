//! Gaussian mixtures with fixed equal weights and rep-point means.
//!
//! [`build_mixture`] turns a [`RepPointSet`] into a [`MixtureModel`] under a
//! [`KernelPolicy`]; the adaptive policy runs the covariance-only EM fit in
//! [`fit_covariances_em`]. [`density_grid`] evaluates a model on a tensor
//! grid.

mod em;
mod grid;
mod kernel;
mod model;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, floor_covariance};
use crate::rep_points::RepPointSet;

pub use em::{fit_covariances_em, responsibilities, EmConfig, EmFit, AUXILIARY_PER_COMPONENT, MAX_AUXILIARY};
pub use grid::{density_grid, Axis, DensityGrid, GridSpec, GRID_MAGIC, GRID_VERSION};
pub use kernel::{
    heuristic_factor, homogeneous_ise, ise_optimal_factor, nearest_neighbour_distances, HomogeneousScale, KernelPolicy,
};
pub use model::{GaussianComponent, MixtureModel, WEIGHT_SUM_TOLERANCE};

/// Summary of an EM fit, suitable for reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmSummary {
    pub auxiliary_count: usize,
    pub iterations: usize,
    pub converged: bool,
    pub initial_log_likelihood: f64,
    pub final_log_likelihood: f64,
    pub frozen_components: usize,
    pub floor_activations: usize,
}

/// What [`build_mixture`] actually did.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub duplicates_removed: usize,
    /// Homogeneous scale factor `c` in `diag((c s_j)²)`, or `σ` for a fixed
    /// isotropic scale.
    pub scale: Option<f64>,
    /// Set when the inscribed policy had a single point and fell back.
    pub inscribed_fallback: bool,
    pub em: Option<EmSummary>,
}

type Deduplicated = (Vec<DVector<f64>>, Option<Vec<DMatrix<f64>>>, usize);

fn deduplicate(points: &RepPointSet) -> Deduplicated {
    let mut kept: Vec<usize> = Vec::with_capacity(points.len());
    for (i, p) in points.points.iter().enumerate() {
        let duplicate = kept.iter().any(|&j| {
            let other = &points.points[j];
            (p - other).norm() <= 1e-12 * (1.0 + p.norm().max(other.norm()))
        });
        if !duplicate {
            kept.push(i);
        }
    }
    let removed = points.len() - kept.len();
    let means = kept.iter().map(|&i| points.points[i].clone()).collect();
    let clusters = points
        .cluster_covariances
        .as_ref()
        .map(|c| kept.iter().map(|&i| c[i].clone()).collect());
    (means, clusters, removed)
}

/// Equal-weight mixture over the rep-points with covariances set by `policy`.
///
/// Duplicate rep-points are dropped (with a warning) before anything else.
pub fn build_mixture(points: &RepPointSet, policy: &KernelPolicy) -> Result<(MixtureModel, BuildReport)> {
    if points.is_empty() {
        return Err(Error::invalid("K", "must be at least 1"));
    }
    let target = &points.target;
    target.validate()?;
    let q = target.dimension();
    if let Some(bad) = points.points.iter().find(|p| p.len() != q) {
        return Err(Error::DimensionMismatch {
            expected: q,
            actual: bad.len(),
        });
    }
    let (means, clusters, removed) = deduplicate(points);
    if removed > 0 {
        warn!("removed {removed} duplicate rep-points before building the mixture");
    }
    let k = means.len();
    let std = target.axis_std();
    let heuristic = kernel::scaled_diagonal(&std, heuristic_factor(k, q));
    let mut report = BuildReport {
        duplicates_removed: removed,
        ..BuildReport::default()
    };

    let covariances = match policy {
        KernelPolicy::Homogeneous { scale } => {
            let (factor, cov) = homogeneous(&means, scale, points)?;
            report.scale = Some(factor);
            vec![cov; k]
        }
        KernelPolicy::Inscribed if k == 1 => {
            info!("inscribed kernel needs two rep-points; using the heuristic homogeneous scale");
            report.inscribed_fallback = true;
            report.scale = Some(heuristic_factor(k, q));
            vec![heuristic]
        }
        KernelPolicy::Inscribed => nearest_neighbour_distances(&means)
            .into_iter()
            .map(|d| DMatrix::identity(q, q) * (0.5 * d).powi(2))
            .collect(),
        KernelPolicy::Adaptive { em } => {
            let initial: Vec<DMatrix<f64>> = match &clusters {
                Some(c) => c
                    .iter()
                    .map(|s| {
                        let (floored, _) = floor_covariance(s);
                        if s.trace() > 0.0 && cholesky_lower(&floored).is_some() {
                            floored
                        } else {
                            heuristic.clone()
                        }
                    })
                    .collect(),
                None => vec![heuristic.clone(); k],
            };
            let m = em.auxiliary_count_for(k);
            let sampler = target.sampler()?;
            let auxiliary = sampler.sample_n(&mut ChaCha8Rng::seed_from_u64(em.seed), m);
            let fit = fit_covariances_em(&means, &initial, &auxiliary, em)?;
            report.em = Some(EmSummary {
                auxiliary_count: m,
                iterations: fit.iterations,
                converged: fit.converged,
                initial_log_likelihood: fit.log_likelihood[0],
                final_log_likelihood: *fit.log_likelihood.last().expect("non-empty history"),
                frozen_components: fit.frozen.iter().filter(|&&f| f).count(),
                floor_activations: fit.floored,
            });
            fit.covariances
        }
    };
    Ok((MixtureModel::equal_weights(&means, &covariances)?, report))
}

fn homogeneous(means: &[DVector<f64>], scale: &HomogeneousScale, points: &RepPointSet) -> Result<(f64, DMatrix<f64>)> {
    let target = &points.target;
    let q = target.dimension();
    let std = target.axis_std();
    match *scale {
        HomogeneousScale::Fixed { sigma } => {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::invalid(
                    "sigma",
                    format!("homogeneous scale must be positive, got {sigma}"),
                ));
            }
            Ok((sigma, DMatrix::identity(q, q) * sigma * sigma))
        }
        HomogeneousScale::Heuristic => {
            let c = heuristic_factor(means.len(), q);
            Ok((c, kernel::scaled_diagonal(&std, c)))
        }
        HomogeneousScale::IseOptimal { samples, seed } => {
            let c = ise_optimal_factor(means, target, samples, seed)?;
            Ok((c, kernel::scaled_diagonal(&std, c)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::DistributionSpec;
    use crate::rep_points::{lds_rep_points, Generator, Provenance};
    use approx::assert_relative_eq;

    fn custom(points: Vec<DVector<f64>>) -> RepPointSet {
        let q = points[0].len();
        RepPointSet::new(points, Provenance::Custom, DistributionSpec::standard_normal(q))
    }

    #[test]
    fn single_fixed_component_is_standard_gaussian() {
        let set = custom(vec![DVector::zeros(2)]);
        let policy = KernelPolicy::Homogeneous {
            scale: HomogeneousScale::Fixed { sigma: 1.0 },
        };
        let (m, _) = build_mixture(&set, &policy).unwrap();
        assert_relative_eq!(
            m.density(&DVector::zeros(2)).unwrap(),
            0.15915494309189535,
            epsilon = 1e-15
        );
    }

    #[test]
    fn inscribed_corners() {
        let set = custom(
            [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
                .iter()
                .map(|&(a, b)| DVector::from_vec(vec![a, b]))
                .collect(),
        );
        let (m, _) = build_mixture(&set, &KernelPolicy::Inscribed).unwrap();
        for c in m.components() {
            assert_eq!(c.covariance(), &(DMatrix::identity(2, 2) * 0.25));
            assert_eq!(c.weight(), 0.25);
        }
    }

    #[test]
    fn inscribed_single_point_falls_back() {
        let (m, report) = build_mixture(&custom(vec![DVector::zeros(2)]), &KernelPolicy::Inscribed).unwrap();
        assert!(report.inscribed_fallback);
        assert_eq!(m.components()[0].covariance(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn duplicates_are_removed() {
        let p = DVector::from_vec(vec![0.5, 0.5]);
        let set = custom(vec![p.clone(), DVector::zeros(2), p]);
        let (m, report) = build_mixture(&set, &KernelPolicy::default()).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(report.duplicates_removed, 1);
    }

    #[test]
    fn means_are_the_rep_points() {
        let target = DistributionSpec::standard_normal(2);
        let set = lds_rep_points(Generator::Glp, 89, &target, 0).unwrap();
        let (m, report) = build_mixture(
            &set,
            &KernelPolicy::Homogeneous {
                scale: HomogeneousScale::ise_optimal(),
            },
        )
        .unwrap();
        assert!(report.scale.unwrap() > 0.1);
        for (c, p) in m.components().iter().zip(&set.points) {
            assert_eq!(c.mean(), p);
            assert_eq!(c.weight(), 1.0 / 89.0);
        }
    }

    #[test]
    fn kmeans_points_start_from_cluster_covariances() {
        use crate::rep_points::{kmeans_rep_points, KMeansConfig};
        let target = DistributionSpec::standard_normal(2);
        let set = kmeans_rep_points(&target, 10, 2000, 1, KMeansConfig::default()).unwrap();
        let policy = KernelPolicy::Adaptive {
            em: EmConfig {
                seed: 2,
                ..EmConfig::default()
            },
        };
        let (m, report) = build_mixture(&set, &policy).unwrap();
        assert_eq!(m.len(), 10);
        let em = report.em.unwrap();
        assert!(em.final_log_likelihood >= em.initial_log_likelihood - 1e-9 * em.initial_log_likelihood.abs());
    }
}
