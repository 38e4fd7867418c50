use std::f64::consts::PI;

use nalgebra::DVector;
use rayon::prelude::*;

use super::SampleCloud;
use crate::error::{Error, Result};
use crate::mixture::{DensityGrid, GridSpec};

/// Isotropic Gaussian kernel density estimate of `cloud` on `grid`.
pub fn kde_density(cloud: &SampleCloud, bandwidth: f64, grid: &GridSpec) -> Result<DensityGrid> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(
            "bandwidth",
            format!("must be positive, got {bandwidth}"),
        ));
    }
    if cloud.dimension() != grid.dimension() {
        return Err(Error::DimensionMismatch {
            expected: grid.dimension(),
            actual: cloud.dimension(),
        });
    }
    let q = cloud.dimension() as f64;
    let norm = cloud.weight() / (2.0 * PI * bandwidth * bandwidth).powf(q / 2.0);
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let coords: Vec<Vec<f64>> = grid.axes.iter().map(|a| a.coordinates()).collect();
    // the isotropic kernel factorizes over axes, so each sample contributes
    // an outer product of one-dimensional profiles
    let profiles: Vec<Vec<Vec<f64>>> = cloud
        .samples
        .iter()
        .map(|s| {
            coords
                .iter()
                .zip(s.iter())
                .map(|(c, &si)| c.iter().map(|&x| (-(x - si) * (x - si) * inv).exp()).collect())
                .collect()
        })
        .collect();
    let mut values = vec![0.0; grid.len()];
    let row = grid.len() / grid.axes[0].count;
    values.par_chunks_mut(row).enumerate().for_each(|(i, out)| {
        for p in &profiles {
            accumulate(out, &p[1..], norm * p[0][i]);
        }
    });
    DensityGrid::new(grid.clone(), values)
}

fn accumulate(out: &mut [f64], profiles: &[Vec<f64>], scale: f64) {
    if scale == 0.0 {
        return;
    }
    match profiles.split_first() {
        None => out[0] += scale,
        Some((first, rest)) => {
            let inner = out.len() / first.len();
            for (chunk, &f) in out.chunks_mut(inner).zip(first) {
                accumulate(chunk, rest, scale * f);
            }
        }
    }
}

/// Mean squared error of a KDE against a reference density on the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandwidthScore {
    pub bandwidth: f64,
    pub mse: f64,
}

/// Scores each bandwidth by grid MSE against `reference` and returns them
/// sorted by bandwidth; the minimum is the MSE-optimal choice.
pub fn kde_bandwidth_sweep<F>(
    cloud: &SampleCloud,
    bandwidths: &[f64],
    grid: &GridSpec,
    reference: F,
) -> Result<Vec<BandwidthScore>>
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    let truth = grid.evaluate(reference);
    let mut scores = bandwidths
        .iter()
        .map(|&h| {
            let est = kde_density(cloud, h, grid)?;
            let mse = est
                .values
                .iter()
                .zip(&truth.values)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / truth.values.len() as f64;
            Ok(BandwidthScore { bandwidth: h, mse })
        })
        .collect::<Result<Vec<_>>>()?;
    scores.sort_by(|a, b| a.bandwidth.total_cmp(&b.bandwidth));
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::SampleOrigin;
    use crate::distribution::DistributionSpec;

    #[test]
    fn single_sample_is_a_standard_gaussian() {
        let cloud = SampleCloud::new(vec![DVector::zeros(2)], SampleOrigin::Propagated).unwrap();
        let grid = GridSpec::cube(2, -4.0, 4.0, 41).unwrap();
        let kde = kde_density(&cloud, 1.0, &grid).unwrap();
        for (i, v) in kde.values.iter().enumerate() {
            let x = grid.point(i);
            let expect = (-x.norm_squared() / 2.0).exp() / (2.0 * PI);
            assert!((v - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn kde_integrates_to_one() {
        let cloud = SampleCloud::monte_carlo(&DistributionSpec::standard_normal(2), 60, 1).unwrap();
        let h = 0.4;
        let ext = cloud
            .samples
            .iter()
            .flat_map(|s| s.iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
            + 6.0 * h;
        let grid = GridSpec::cube(2, -ext, ext, 161).unwrap();
        let mass = kde_density(&cloud, h, &grid).unwrap().integral();
        assert!((mass - 1.0).abs() < 0.02, "{mass}");
    }

    #[test]
    fn bad_bandwidth_rejected() {
        let cloud = SampleCloud::new(vec![DVector::zeros(1)], SampleOrigin::Propagated).unwrap();
        let grid = GridSpec::cube(1, -1.0, 1.0, 3).unwrap();
        assert!(kde_density(&cloud, 0.0, &grid).is_err());
    }

    #[test]
    fn sweep_prefers_a_moderate_bandwidth() {
        let cloud = SampleCloud::monte_carlo(&DistributionSpec::standard_normal(1), 400, 4).unwrap();
        let grid = GridSpec::cube(1, -5.0, 5.0, 201).unwrap();
        let oracle = |x: &DVector<f64>| (-x[0] * x[0] / 2.0).exp() / (2.0 * PI).sqrt();
        let scores = kde_bandwidth_sweep(&cloud, &[0.01, 0.3, 3.0], &grid, oracle).unwrap();
        let best = scores.iter().min_by(|a, b| a.mse.total_cmp(&b.mse)).unwrap();
        assert_eq!(best.bandwidth, 0.3);
    }
}
