use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Provenance, RepPointSet};
use crate::distribution::DistributionSpec;
use crate::error::{Error, Result};

/// Minimum ratio of auxiliary points to centers.
pub const MIN_AUXILIARY_RATIO: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the largest center displacement, relative
    /// to the diagonal of the auxiliary sample's bounding box.
    pub relative_tolerance: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            max_iterations: 500,
            relative_tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KMeansOutcome {
    pub centers: Vec<DVector<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned center, recorded after every
    /// assignment step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub reseeded: usize,
}

impl KMeansOutcome {
    /// Within-cluster covariance about each center. Clusters with fewer than
    /// two members get a zero matrix.
    pub fn cluster_covariances(&self, auxiliary: &[DVector<f64>]) -> Vec<DMatrix<f64>> {
        let q = auxiliary.first().map_or(0, |p| p.len());
        let mut sums = vec![DMatrix::zeros(q, q); self.centers.len()];
        let mut counts = vec![0usize; self.centers.len()];
        for (p, &k) in auxiliary.iter().zip(&self.assignments) {
            let d = p - &self.centers[k];
            sums[k].ger(1.0, &d, &d, 1.0);
            counts[k] += 1;
        }
        sums.into_iter()
            .zip(counts)
            .map(|(s, n)| if n > 1 { s / n as f64 } else { DMatrix::zeros(q, q) })
            .collect()
    }
}

fn nearest(point: &DVector<f64>, centers: &[DVector<f64>]) -> (usize, f64) {
    centers
        .iter()
        .enumerate()
        .map(|(k, c)| (k, (point - c).norm_squared()))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn assign(points: &[DVector<f64>], centers: &[DVector<f64>]) -> (Vec<usize>, Vec<f64>) {
    points.par_iter().map(|p| nearest(p, centers)).unzip()
}

fn bounding_diagonal(points: &[DVector<f64>]) -> f64 {
    let q = points[0].len();
    (0..q)
        .map(|j| {
            let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[j]), hi.max(p[j]))
            });
            (hi - lo).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Lloyd iterations on a fixed auxiliary sample.
///
/// A center left without members is moved onto the auxiliary point that is
/// farthest from its own assigned center, so the number of clusters never
/// drops.
pub fn kmeans(auxiliary: &[DVector<f64>], initial: Vec<DVector<f64>>, config: KMeansConfig) -> Result<KMeansOutcome> {
    let k = initial.len();
    if k == 0 {
        return Err(Error::invalid("K", "must be at least 1"));
    }
    if auxiliary.len() < k {
        return Err(Error::invalid("auxiliary_count", "fewer auxiliary points than centers"));
    }
    let q = initial[0].len();
    if let Some(bad) = auxiliary.iter().chain(&initial).find(|p| p.len() != q) {
        return Err(Error::DimensionMismatch {
            expected: q,
            actual: bad.len(),
        });
    }
    let tolerance = config.relative_tolerance * bounding_diagonal(auxiliary).max(f64::MIN_POSITIVE);
    let mut centers = initial;
    let mut history = Vec::new();
    let mut reseeded = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let (mut labels, mut dist) = assign(auxiliary, &centers);
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = dist
                .iter()
                .enumerate()
                .filter(|&(j, _)| counts[labels[j]] > 1)
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, (j, &d)| if d > best.1 { (j, d) } else { best },
                )
                .0;
            counts[labels[far]] -= 1;
            labels[far] = c;
            counts[c] = 1;
            dist[far] = 0.0;
            centers[c] = auxiliary[far].clone();
            reseeded += 1;
        }
        history.push(dist.iter().sum());

        let mut sums = vec![DVector::zeros(q); k];
        for (p, &l) in auxiliary.iter().zip(&labels) {
            sums[l] += p;
        }
        let mut shift: f64 = 0.0;
        for (c, (s, n)) in sums.into_iter().zip(&counts).enumerate() {
            let updated = s / *n as f64;
            shift = shift.max((&updated - &centers[c]).norm());
            centers[c] = updated;
        }
        if shift < tolerance {
            converged = true;
            break;
        }
    }
    if reseeded > 0 {
        debug!("k-means reseeded {reseeded} empty clusters");
    }
    let (labels, dist) = assign(auxiliary, &centers);
    history.push(dist.iter().sum());
    let assignments = labels;
    Ok(KMeansOutcome {
        centers,
        assignments,
        objective_history: history,
        iterations,
        converged,
        reseeded,
    })
}

/// Cluster-centroid rep-points: `K` initial centers and `M` auxiliary points
/// are both drawn from the target with a seeded stream, then refined by
/// [`kmeans`]. The within-cluster covariances are kept on the result.
pub fn kmeans_rep_points(
    target: &DistributionSpec,
    k: usize,
    auxiliary_count: usize,
    seed: u64,
    config: KMeansConfig,
) -> Result<RepPointSet> {
    if k == 0 {
        return Err(Error::invalid("K", "must be at least 1"));
    }
    if auxiliary_count < MIN_AUXILIARY_RATIO * k {
        return Err(Error::invalid(
            "auxiliary_count",
            format!(
                "need at least {MIN_AUXILIARY_RATIO}·K = {} points, got {auxiliary_count}",
                MIN_AUXILIARY_RATIO * k
            ),
        ));
    }
    let sampler = target.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = sampler.sample_n(&mut rng, k);
    let auxiliary = sampler.sample_n(&mut rng, auxiliary_count);
    let outcome = kmeans(&auxiliary, initial, config)?;
    let covariances = outcome.cluster_covariances(&auxiliary);
    let mut set = RepPointSet::new(
        outcome.centers,
        Provenance::KMeans { seed, auxiliary_count },
        target.clone(),
    );
    set.cluster_covariances = Some(covariances);
    Ok(set)
}
