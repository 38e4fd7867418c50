//! Probability evolution: every mixture component is pushed through the
//! dynamics by cubature and carried forward as a Gaussian with the
//! propagated mean and covariance, while the weights never change.
//!
//! * [`evolve_static`] for a map `x = M(θ)`;
//! * [`evolve_conservative`] for a deterministic flow of an augmented random
//!   initial condition;
//! * [`evolve_markov`] for an SDE with additive noise, stepping the drift by
//!   cubature and adding the sampled noise covariance at each step.

mod conservative;
mod io;
mod markov;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::cubature::{cubature_points, propagate_moments_with, MomentPair};
use crate::dynamics::StaticMap;
use crate::error::{Error, Result};
use crate::linalg::floor_covariance;
use crate::mixture::{density_grid, DensityGrid, GaussianComponent, GridSpec, MixtureModel};

pub use conservative::{evolve_conservative, AugmentedState};
pub use io::{read_trace, write_trace, TraceMeta};
pub use markov::{evolve_markov, noise_rng, MarkovConfig};

/// Time-indexed sequence of mixtures sharing weights and component count.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub snapshots: Vec<MixtureModel>,
    /// Hex SHA-256 identifying the run that produced the trace.
    pub provenance: String,
    /// Dynamics evaluations needed per snapshot (or per step for Markov
    /// evolution): the number of cubature nodes times the number of
    /// components.
    pub evaluations_per_snapshot: usize,
    /// How often the relative eigenvalue floor had to raise a propagated
    /// covariance.
    pub floor_activations: usize,
}

impl EvolutionTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&MixtureModel> {
        self.snapshots.last()
    }
}

/// Hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Re-Gaussianizes propagated moments into a component, applying the
/// relative eigenvalue floor. Returns whether the floor changed anything.
pub(crate) fn to_component(weight: f64, moments: MomentPair) -> Result<(GaussianComponent, bool)> {
    let (cov, floored) = floor_covariance(&moments.covariance);
    Ok((GaussianComponent::new(weight, moments.mean, cov)?, floored))
}

pub(crate) fn assemble(weights: &[f64], moments: Vec<MomentPair>) -> Result<(MixtureModel, usize)> {
    let mut floored = 0;
    let components = weights
        .iter()
        .zip(moments)
        .enumerate()
        .map(|(k, (&w, m))| {
            let (c, hit) = to_component(w, m).map_err(|e| e.in_component(k))?;
            floored += usize::from(hit);
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((MixtureModel::new(components)?, floored))
}

/// Output mixture of a static map: same weights, each component replaced by
/// the cubature moments of its image.
pub fn evolve_static(map: &dyn StaticMap, input: &MixtureModel) -> Result<MixtureModel> {
    if input.dimension() != map.input_dimension() {
        return Err(Error::DimensionMismatch {
            expected: map.input_dimension(),
            actual: input.dimension(),
        });
    }
    let moments = input
        .components()
        .par_iter()
        .enumerate()
        .map(|(k, c)| propagate_moments_with(&cubature_points(c), |x| map.apply(x)).map_err(|e| e.in_component(k)))
        .collect::<Result<Vec<_>>>()?;
    let (model, floored) = assemble(&input.weights(), moments)?;
    if floored > 0 {
        debug!("covariance floor applied to {floored} propagated components");
    }
    Ok(model)
}

/// Mixture mean and covariance of every snapshot.
pub fn second_order_statistics(trace: &EvolutionTrace) -> Vec<(DVector<f64>, DMatrix<f64>)> {
    trace.snapshots.iter().map(MixtureModel::moments).collect()
}

/// Density of snapshot `index` on `grid`.
pub fn assemble_density(trace: &EvolutionTrace, index: usize, grid: &GridSpec) -> Result<DensityGrid> {
    let model = trace.snapshots.get(index).ok_or_else(|| {
        Error::invalid(
            "index",
            format!("snapshot {index} out of range (trace has {})", trace.len()),
        )
    })?;
    density_grid(model, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{linear_map_model, FnMap};
    use approx::assert_relative_eq;

    fn two_component() -> MixtureModel {
        let means = [DVector::from_vec(vec![-1.0, 0.5]), DVector::from_vec(vec![1.0, 0.0])];
        let covs = [
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]),
            DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.0, 0.4]),
        ];
        MixtureModel::equal_weights(&means, &covs).unwrap()
    }

    #[test]
    fn identity_map_preserves_mixture() {
        let input = two_component();
        let out = evolve_static(&FnMap::new(2, 2, |x: &DVector<f64>| x.clone()), &input).unwrap();
        for (a, b) in out.components().iter().zip(input.components()) {
            assert_eq!(a.weight(), b.weight());
            assert!((a.mean() - b.mean()).amax() < 1e-12);
            assert!((a.covariance() - b.covariance()).amax() < 1e-12);
        }
    }

    #[test]
    fn single_component_linear_map() {
        let (map, _) = linear_map_model();
        let input = MixtureModel::new(vec![GaussianComponent::standard(2)]).unwrap();
        let out = evolve_static(&map, &input).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[34.0, 13.0, 13.0, 5.0]);
        assert!((out.components()[0].covariance() - expect).amax() < 1e-12);
    }

    #[test]
    fn statistics_of_two_point_mixture() {
        let means = [DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)];
        let covs = [DMatrix::identity(1, 1), DMatrix::identity(1, 1)];
        let m = MixtureModel::equal_weights(&means, &covs).unwrap();
        let trace = EvolutionTrace {
            times: vec![0.0],
            snapshots: vec![m],
            provenance: String::new(),
            evaluations_per_snapshot: 4,
            floor_activations: 0,
        };
        let stats = second_order_statistics(&trace);
        assert_eq!(stats[0].0[0], 0.0);
        assert_relative_eq!(stats[0].1[(0, 0)], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (map, _) = linear_map_model();
        let input = MixtureModel::new(vec![GaussianComponent::standard(3)]).unwrap();
        assert!(evolve_static(&map, &input).is_err());
    }

    #[test]
    fn hash_is_hex() {
        let h = sha256_hex(b"abc");
        assert_eq!(h, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
