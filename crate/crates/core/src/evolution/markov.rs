use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{assemble, sha256_hex, EvolutionTrace};
use crate::cubature::{cubature_points, moments_from_images, MomentPair};
use crate::dynamics::{step_count, Rk4Workspace, SdeModel};
use crate::error::{Error, Result};
use crate::mixture::{GaussianComponent, MixtureModel};

/// Step control for [`evolve_markov`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkovConfig {
    pub start_time: f64,
    /// Snapshot step `Δt`; also the noise increment interval.
    pub dt: f64,
    pub end_time: f64,
    /// RK4 substeps of the drift per `Δt`.
    pub substeps: usize,
    /// Antithetic pairs of Wiener increments per component and step.
    pub noise_pairs: usize,
    pub seed: u64,
    /// Keep every `snapshot_every`-th step (the last step is always kept).
    pub snapshot_every: usize,
}

impl Default for MarkovConfig {
    fn default() -> Self {
        MarkovConfig {
            start_time: 0.0,
            dt: 0.01,
            end_time: 1.0,
            substeps: 3,
            noise_pairs: 20,
            seed: 0,
            snapshot_every: 1,
        }
    }
}

impl MarkovConfig {
    fn validate(&self) -> Result<usize> {
        if self.noise_pairs == 0 {
            return Err(Error::invalid("noise_pairs", "at least one noise sample is required"));
        }
        if self.substeps == 0 {
            return Err(Error::invalid("substeps", "must be at least 1"));
        }
        if self.snapshot_every == 0 {
            return Err(Error::invalid("snapshot_every", "must be at least 1"));
        }
        if !(self.end_time > self.start_time) {
            return Err(Error::invalid("end_time", "must exceed start_time"));
        }
        step_count(self.start_time, self.end_time, self.dt)
    }
}

/// Independent noise stream for one component at one step, so results do not
/// depend on how the work is scheduled.
pub fn noise_rng(seed: u64, component: usize, step: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(component as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(step as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Symmetric square root of a PSD matrix.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

struct Stepper<'a> {
    model: &'a SdeModel,
    h: f64,
    substeps: usize,
    /// `A · sqrt(D Δt)`: maps a standard normal draw to a state increment.
    noise_map: DMatrix<f64>,
    noise_pairs: usize,
    seed: u64,
}

impl Stepper<'_> {
    fn drift(&self, x0: &DVector<f64>, t0: f64, ws: &mut Rk4Workspace) -> Result<DVector<f64>> {
        let mut x = x0.clone();
        for s in 0..self.substeps {
            let t = t0 + s as f64 * self.h;
            ws.step(&*self.model.drift, t, self.h, &mut x);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationBlowup { time: t + self.h });
            }
        }
        Ok(x)
    }

    /// Sample second moment of `A ΔB` over antithetic pairs. Each pair
    /// contributes the same outer product, and its sample mean is exactly zero.
    fn noise_covariance(&self, component: usize, step: usize) -> DMatrix<f64> {
        let n = self.noise_map.nrows();
        let m = self.noise_map.ncols();
        let mut acc = DMatrix::zeros(n, n);
        if self.noise_map.iter().all(|&v| v == 0.0) {
            return acc;
        }
        let mut rng = noise_rng(self.seed, component, step);
        for _ in 0..self.noise_pairs {
            let xi = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
            let inc = &self.noise_map * xi;
            acc.ger(1.0, &inc, &inc, 1.0);
        }
        acc / self.noise_pairs as f64
    }

    fn advance(&self, c: &GaussianComponent, k: usize, step: usize, t0: f64) -> Result<MomentPair> {
        let set = cubature_points(c);
        let mut ws = Rk4Workspace::new(c.dimension());
        let images = set
            .points
            .iter()
            .map(|p| self.drift(p, t0, &mut ws))
            .collect::<Result<Vec<_>>>()?;
        let mut moments = moments_from_images(&images, &set.weights);
        moments.covariance += self.noise_covariance(k, step);
        Ok(moments)
    }
}

/// Markov evolution of an SDE with additive noise. Each step moves the `2n`
/// cubature points of every component through the drift alone, re-fits the
/// component to the image moments, and adds the sampled covariance of the
/// noise increment `A ΔB`, `Cov(ΔB) = D Δt`. The updated components are the
/// input of the next step; weights never change.
pub fn evolve_markov(model: &SdeModel, input: &MixtureModel, config: &MarkovConfig) -> Result<EvolutionTrace> {
    let steps = config.validate()?;
    if input.dimension() != model.dimension() {
        return Err(Error::DimensionMismatch {
            expected: model.dimension(),
            actual: input.dimension(),
        });
    }
    let stepper = Stepper {
        model,
        h: config.dt / config.substeps as f64,
        substeps: config.substeps,
        noise_map: &model.diffusion * psd_sqrt(&(&model.intensity * config.dt)),
        noise_pairs: config.noise_pairs,
        seed: config.seed,
    };
    let weights = input.weights();
    let mut current = input.clone();
    let mut times = vec![config.start_time];
    let mut snapshots = vec![current.clone()];
    let mut floored = 0;
    for step in 1..=steps {
        let t0 = config.start_time + (step - 1) as f64 * config.dt;
        let moments = current
            .components()
            .par_iter()
            .enumerate()
            .map(|(k, c)| stepper.advance(c, k, step, t0).map_err(|e| e.in_component(k)))
            .collect::<Result<Vec<_>>>()?;
        let (next, hit) = assemble(&weights, moments)?;
        floored += hit;
        current = next;
        if step % config.snapshot_every == 0 || step == steps {
            times.push(config.start_time + step as f64 * config.dt);
            snapshots.push(current.clone());
        }
    }
    if floored > 0 {
        debug!("covariance floor applied {floored} times during Markov evolution");
    }
    let provenance = sha256_hex(
        format!(
            "markov|{}|{}|{}|{}|{}",
            serde_json::to_string(config)?,
            serde_json::to_string(input)?,
            model.diffusion,
            model.intensity,
            model.dimension()
        )
        .as_bytes(),
    );
    Ok(EvolutionTrace {
        times,
        snapshots,
        provenance,
        evaluations_per_snapshot: 2 * input.dimension() * input.len(),
        floor_activations: floored,
    })
}
