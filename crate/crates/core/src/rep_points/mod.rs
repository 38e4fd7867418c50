//! Representative points: the fixed component locations of a mixture.
//!
//! Two routes are offered. A low-discrepancy set in the unit hypercube can be
//! pushed through the inverse CDF of the target ([`generate_glp`],
//! [`generate_halton`], [`transform_to_target`]), or cluster centroids of a
//! large auxiliary sample can be used ([`kmeans_rep_points`]).
//! [`f_discrepancy`] scores either kind against the target CDF.

mod discrepancy;
mod io;
mod kmeans;
mod lds;
mod transform;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distribution::DistributionSpec;

pub use discrepancy::{f_discrepancy, FDiscrepancy, PROBE_COUNT};
pub use io::{read_rep_points_csv, write_rep_points, RepPointMeta};
pub use kmeans::{kmeans, kmeans_rep_points, KMeansConfig, KMeansOutcome, MIN_AUXILIARY_RATIO};
pub use lds::{
    generate_glp, generate_glp_strict, generate_halton, generate_random, glp_generating_vector, radical_inverse,
    FIBONACCI_LATTICES,
};
pub use transform::{lds_rep_points, transform_to_target};

/// Which generator produced a unit point set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Glp,
    Halton,
    Random,
}

/// Points in the half-open unit hypercube.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitPointSet {
    pub points: Vec<Vec<f64>>,
    pub generator: Generator,
}

impl UnitPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Shifts every coordinate by half a cell, `{x + 1/(2n)}`.
    ///
    /// Raw lattice sets contain the origin, which has no finite image under
    /// an unbounded inverse CDF. The shifted set keeps the lattice structure
    /// and puts every coordinate strictly inside `(0, 1)`.
    pub fn centered(&self) -> UnitPointSet {
        let shift = 0.5 / self.len() as f64;
        UnitPointSet {
            points: self
                .points
                .iter()
                .map(|p| p.iter().map(|x| (x + shift).fract()).collect())
                .collect(),
            generator: self.generator,
        }
    }
}

/// How a rep-point set was obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Provenance {
    LdsTransform { generator: Generator, seed: Option<u64> },
    KMeans { seed: u64, auxiliary_count: usize },
    Custom,
}

/// K locations in the input space together with their origin.
#[derive(Clone, Debug)]
pub struct RepPointSet {
    pub points: Vec<DVector<f64>>,
    pub provenance: Provenance,
    pub target: DistributionSpec,
    /// Within-cluster covariances when the points are cluster centroids.
    pub cluster_covariances: Option<Vec<DMatrix<f64>>>,
}

impl RepPointSet {
    pub fn new(points: Vec<DVector<f64>>, provenance: Provenance, target: DistributionSpec) -> Self {
        RepPointSet {
            points,
            provenance,
            target,
            cluster_covariances: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.target.dimension()
    }
}
