//! Sampling-based reference solutions and grid comparison metrics.
//!
//! A [`SampleCloud`] is pushed through the same integrators as the mixture
//! path by [`propagate_samples`] (maps and flows) or [`propagate_sde_samples`]
//! (SDEs). [`kde_density`] smooths a cloud onto a grid, and [`grid_error`]
//! and [`count_modes`] compare grids.

mod kde;
mod metrics;

use log::warn;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::DistributionSpec;
use crate::dynamics::{step_count, DynamicalModel, Rk4Workspace, SdeModel};
use crate::error::{Error, Result};
use crate::evolution::{noise_rng, MarkovConfig};
use crate::rep_points::{lds_rep_points, Generator, RepPointSet};

pub use kde::{kde_bandwidth_sweep, kde_density, BandwidthScore};
pub use metrics::{count_modes, grid_error, Norm, MODE_THRESHOLD};

/// How a cloud was drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleOrigin {
    MonteCarlo {
        seed: u64,
    },
    Qmc {
        generator: Generator,
        seed: Option<u64>,
    },
    /// Image of another cloud under a model.
    Propagated,
}

/// Equally weighted samples.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleCloud {
    pub samples: Vec<DVector<f64>>,
    pub origin: SampleOrigin,
}

impl SampleCloud {
    pub fn new(samples: Vec<DVector<f64>>, origin: SampleOrigin) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::invalid("samples", "a cloud needs at least one sample"));
        };
        if let Some(s) = samples.iter().find(|s| s.len() != first.len()) {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                actual: s.len(),
            });
        }
        Ok(SampleCloud { samples, origin })
    }

    /// Pseudo-random draws from `target`.
    pub fn monte_carlo(target: &DistributionSpec, count: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = target.sampler()?.sample_n(&mut rng, count);
        Self::new(samples, SampleOrigin::MonteCarlo { seed })
    }

    /// Low-discrepancy points transformed to `target`.
    pub fn qmc(generator: Generator, count: usize, target: &DistributionSpec, seed: u64) -> Result<Self> {
        Self::from_rep_points(&lds_rep_points(generator, count, target, seed)?, generator)
    }

    pub fn from_rep_points(set: &RepPointSet, generator: Generator) -> Result<Self> {
        let seed = match set.provenance {
            crate::rep_points::Provenance::LdsTransform { seed, .. } => seed,
            _ => None,
        };
        Self::new(set.points.clone(), SampleOrigin::Qmc { generator, seed })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.samples[0].len()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.samples.len() as f64
    }

    /// Sample mean and (biased, `1/N`) covariance.
    pub fn moments(&self) -> (DVector<f64>, nalgebra::DMatrix<f64>) {
        let w = self.weight();
        let q = self.dimension();
        let mean = self.samples.iter().fold(DVector::zeros(q), |acc, s| acc + s * w);
        let mut cov = nalgebra::DMatrix::zeros(q, q);
        for s in &self.samples {
            let d = s - &mean;
            cov.ger(w, &d, &d, 1.0);
        }
        (mean, cov)
    }
}

/// Clouds at each output time, plus the number of samples dropped because
/// their trajectory failed numerically.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagatedClouds {
    pub times: Vec<f64>,
    pub clouds: Vec<SampleCloud>,
    pub failures: usize,
}

fn collect(times: Vec<f64>, results: Vec<Result<Vec<DVector<f64>>>>) -> Result<PropagatedClouds> {
    let mut kept = Vec::with_capacity(results.len());
    let mut failures = 0;
    for r in results {
        match r {
            Ok(traj) => kept.push(traj),
            Err(e) if e.is_numerical() => failures += 1,
            Err(e) => return Err(e),
        }
    }
    if failures > 0 {
        warn!("{failures} sample trajectories failed and were excluded");
    }
    if kept.is_empty() {
        return Err(Error::invalid("samples", "every sample trajectory failed"));
    }
    let clouds = (0..times.len())
        .map(|ti| SampleCloud::new(kept.iter().map(|t| t[ti].clone()).collect(), SampleOrigin::Propagated))
        .collect::<Result<Vec<_>>>()?;
    Ok(PropagatedClouds {
        times,
        clouds,
        failures,
    })
}

/// Pushes every sample through a static map (one output cloud, `times`
/// ignored) or a deterministic flow (one cloud per time). SDE models need
/// noise settings and go through [`propagate_sde_samples`].
pub fn propagate_samples(model: &DynamicalModel, cloud: &SampleCloud, times: &[f64]) -> Result<PropagatedClouds> {
    if cloud.dimension() != model.input_dimension() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dimension(),
            actual: cloud.dimension(),
        });
    }
    match model {
        DynamicalModel::Static(map) => {
            let results = cloud
                .samples
                .par_iter()
                .map(|s| map.apply(s).map(|x| vec![x]))
                .collect();
            collect(vec![0.0], results)
        }
        DynamicalModel::Flow(flow) => {
            let results = cloud.samples.par_iter().map(|s| flow.trajectory(s, times)).collect();
            collect(times.to_vec(), results)
        }
        DynamicalModel::Sde(_) => Err(Error::invalid(
            "model",
            "SDE samples need a step configuration; use propagate_sde_samples",
        )),
    }
}

/// Sample paths of an SDE on the same time grid as Markov evolution: per
/// step, RK4 substeps of the drift followed by a Gaussian increment
/// `A ΔB`, `Cov(ΔB) = D Δt`. Sample `i` at step `j` draws from its own
/// stream, so results do not depend on scheduling.
pub fn propagate_sde_samples(model: &SdeModel, cloud: &SampleCloud, config: &MarkovConfig) -> Result<PropagatedClouds> {
    if cloud.dimension() != model.dimension() {
        return Err(Error::DimensionMismatch {
            expected: model.dimension(),
            actual: cloud.dimension(),
        });
    }
    if config.substeps == 0 || config.snapshot_every == 0 {
        return Err(Error::invalid("config", "substeps and snapshot_every must be positive"));
    }
    let steps = step_count(config.start_time, config.end_time, config.dt)?;
    let h = config.dt / config.substeps as f64;
    let eig = (&model.intensity * config.dt).symmetric_eigen();
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let noise_map =
        &model.diffusion * (&eig.eigenvectors * nalgebra::DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose());
    let noiseless = noise_map.iter().all(|&v| v == 0.0);
    let kept: Vec<usize> = (0..=steps)
        .filter(|&j| j % config.snapshot_every == 0 || j == steps)
        .collect();
    let times = kept.iter().map(|&j| config.start_time + j as f64 * config.dt).collect();
    let results = cloud
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut ws = Rk4Workspace::new(s.len());
            let mut x = s.clone();
            let mut out = vec![x.clone()];
            for j in 1..=steps {
                let t0 = config.start_time + (j - 1) as f64 * config.dt;
                for k in 0..config.substeps {
                    ws.step(&*model.drift, t0 + k as f64 * h, h, &mut x);
                }
                if !noiseless {
                    let mut rng = noise_rng(config.seed, i, j);
                    let xi = DVector::from_fn(noise_map.ncols(), |_, _| StandardNormal.sample(&mut rng));
                    x.gemv(1.0, &noise_map, &xi, 1.0);
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::IntegrationBlowup { time: t0 + config.dt });
                }
                if j % config.snapshot_every == 0 || j == steps {
                    out.push(x.clone());
                }
            }
            Ok(out)
        })
        .collect();
    collect(times, results)
}
