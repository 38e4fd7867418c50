use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, floor_covariance, half_log_det, log_sum_exp};

const CHUNK: usize = 2048;
/// Default auxiliary points per component.
pub const AUXILIARY_PER_COMPONENT: usize = 200;
/// Upper limit on the default auxiliary sample size.
pub const MAX_AUXILIARY: usize = 1_000_000;

/// Settings of the covariance-only EM fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    /// Stop when `|ΔL| < tolerance_per_point · M`.
    pub tolerance_per_point: f64,
    pub max_iterations: usize,
    /// Auxiliary sample size; `None` means `min(200 K, 10⁶)`.
    pub auxiliary_count: Option<usize>,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            tolerance_per_point: 1e-8,
            max_iterations: 300,
            auxiliary_count: None,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn auxiliary_count_for(&self, k: usize) -> usize {
        self.auxiliary_count
            .unwrap_or_else(|| (AUXILIARY_PER_COMPONENT * k).min(MAX_AUXILIARY))
    }
}

/// Result of [`fit_covariances_em`].
#[derive(Clone, Debug)]
pub struct EmFit {
    pub covariances: Vec<DMatrix<f64>>,
    /// Log-likelihood of the initial covariances followed by one entry per
    /// iteration.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Components whose responsibility mass fell below the dimension and
    /// were therefore held at their last value.
    pub frozen: Vec<bool>,
    /// Number of covariance updates that hit the eigenvalue floor.
    pub floored: usize,
}

struct Factors {
    q: usize,
    /// Row-major lower Cholesky factors, `q²` entries per component.
    chol: Vec<f64>,
    log_norm: Vec<f64>,
}

fn factor(covs: &[DMatrix<f64>], log_weight: f64) -> Result<Factors> {
    let q = covs.first().map_or(0, |c| c.nrows());
    let mut chol = Vec::with_capacity(covs.len() * q * q);
    let mut log_norm = Vec::with_capacity(covs.len());
    for (k, c) in covs.iter().enumerate() {
        let l = cholesky_lower(c).ok_or(Error::NotPositiveDefinite { component: k })?;
        log_norm.push(log_weight - half_log_det(&l) - 0.5 * q as f64 * (2.0 * std::f64::consts::PI).ln());
        for i in 0..q {
            for j in 0..q {
                chol.push(l[(i, j)]);
            }
        }
    }
    Ok(Factors { q, chol, log_norm })
}

fn log_terms(x: &DVector<f64>, means: &[DVector<f64>], f: &Factors, y: &mut [f64], out: &mut [f64]) {
    let q = f.q;
    for (k, m) in means.iter().enumerate() {
        let l = &f.chol[k * q * q..(k + 1) * q * q];
        let mut acc = 0.0;
        for i in 0..q {
            let row = &l[i * q..i * q + i];
            let s = row.iter().zip(&y[..i]).fold(x[i] - m[i], |s, (a, b)| s - a * b);
            let yi = s / l[i * q + i];
            y[i] = yi;
            acc += yi * yi;
        }
        out[k] = f.log_norm[k] - 0.5 * acc;
    }
}

/// Per-point responsibilities `λ_{k,j}` (rows are auxiliary points).
pub fn responsibilities(
    means: &[DVector<f64>],
    covariances: &[DMatrix<f64>],
    auxiliary: &[DVector<f64>],
) -> Result<Vec<Vec<f64>>> {
    let k = means.len();
    let f = factor(covariances, -(k as f64).ln())?;
    Ok(auxiliary
        .par_iter()
        .map_init(
            || vec![0.0; f.q],
            |y, x| {
                let mut t = vec![0.0; k];
                log_terms(x, means, &f, y, &mut t);
                let lse = log_sum_exp(&t);
                t.iter().map(|v| (v - lse).exp()).collect()
            },
        )
        .collect())
}

struct Stats {
    log_likelihood: f64,
    mass: Vec<f64>,
    /// Row-major `q × q` scatter matrices, one block per component.
    scatter: Vec<f64>,
}

impl Stats {
    fn zeros(k: usize, q: usize) -> Self {
        Stats {
            log_likelihood: 0.0,
            mass: vec![0.0; k],
            scatter: vec![0.0; k * q * q],
        }
    }

    fn scatter_matrix(&self, c: usize, q: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(q, q, &self.scatter[c * q * q..(c + 1) * q * q])
    }
}

fn e_step(means: &[DVector<f64>], covs: &[DMatrix<f64>], auxiliary: &[DVector<f64>]) -> Result<Stats> {
    let k = means.len();
    let q = means[0].len();
    let f = factor(covs, -(k as f64).ln())?;
    let partial: Vec<Stats> = auxiliary
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut s = Stats::zeros(k, q);
            let mut t = vec![0.0; k];
            let mut y = vec![0.0; q];
            let mut d = vec![0.0; q];
            for x in chunk {
                log_terms(x, means, &f, &mut y, &mut t);
                let lse = log_sum_exp(&t);
                s.log_likelihood += lse;
                for c in 0..k {
                    let r = (t[c] - lse).exp();
                    if r > 0.0 {
                        for (di, (xi, mi)) in d.iter_mut().zip(x.iter().zip(means[c].iter())) {
                            *di = xi - mi;
                        }
                        s.mass[c] += r;
                        let block = &mut s.scatter[c * q * q..(c + 1) * q * q];
                        for i in 0..q {
                            let ri = r * d[i];
                            for j in 0..q {
                                block[i * q + j] += ri * d[j];
                            }
                        }
                    }
                }
            }
            s
        })
        .collect();
    let mut total = Stats::zeros(k, q);
    for p in partial {
        total.log_likelihood += p.log_likelihood;
        for (a, b) in total.mass.iter_mut().zip(&p.mass) {
            *a += b;
        }
        for (a, b) in total.scatter.iter_mut().zip(&p.scatter) {
            *a += b;
        }
    }
    Ok(total)
}

/// Reduced EM: the equal weights `1/K` and the means stay fixed, only the
/// covariances are re-estimated from the auxiliary sample.
///
/// Each update is floored at `1e-8 · trace / q` on the eigenvalues. A
/// component whose responsibility mass drops below `q` keeps its previous
/// covariance and is reported in [`EmFit::frozen`].
pub fn fit_covariances_em(
    means: &[DVector<f64>],
    initial: &[DMatrix<f64>],
    auxiliary: &[DVector<f64>],
    config: &EmConfig,
) -> Result<EmFit> {
    let k = means.len();
    if k == 0 {
        return Err(Error::invalid("means", "no components"));
    }
    if initial.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: initial.len(),
        });
    }
    let q = means[0].len();
    if let Some(bad) = auxiliary.iter().chain(means).find(|p| p.len() != q) {
        return Err(Error::DimensionMismatch {
            expected: q,
            actual: bad.len(),
        });
    }
    if auxiliary.len() < 50 * k {
        return Err(Error::invalid(
            "auxiliary_count",
            format!(
                "need at least 50·K = {} auxiliary points, got {}",
                50 * k,
                auxiliary.len()
            ),
        ));
    }
    let tolerance = config.tolerance_per_point * auxiliary.len() as f64;
    let mut covs = initial.to_vec();
    let mut frozen = vec![false; k];
    let mut floored = 0;
    let mut stats = e_step(means, &covs, auxiliary)?;
    let mut history = vec![stats.log_likelihood];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        for c in 0..k {
            if stats.mass[c] < q as f64 {
                if !frozen[c] {
                    debug!("component {c} orphaned (mass {:.3e}); covariance frozen", stats.mass[c]);
                }
                frozen[c] = true;
                continue;
            }
            frozen[c] = false;
            let (cov, hit) = floor_covariance(&(stats.scatter_matrix(c, q) / stats.mass[c]));
            floored += usize::from(hit);
            covs[c] = cov;
        }
        stats = e_step(means, &covs, auxiliary)?;
        let previous = *history.last().expect("history starts non-empty");
        history.push(stats.log_likelihood);
        if (stats.log_likelihood - previous).abs() < tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("EM stopped after {iterations} iterations without meeting the tolerance");
    }
    if floored > 0 {
        debug!("EM eigenvalue floor was active {floored} times");
    }
    Ok(EmFit {
        covariances: covs,
        log_likelihood: history,
        iterations,
        converged,
        frozen,
        floored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn single_component_is_sample_covariance_about_fixed_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let aux: Vec<DVector<f64>> = (0..500)
            .map(|_| DVector::from_iterator(2, (0..2).map(|_| StandardNormal.sample(&mut rng))))
            .collect();
        let mean = DVector::from_vec(vec![0.1, -0.2]);
        let fit = fit_covariances_em(
            std::slice::from_ref(&mean),
            &[DMatrix::identity(2, 2)],
            &aux,
            &EmConfig::default(),
        )
        .unwrap();
        let expect = aux.iter().fold(DMatrix::zeros(2, 2), |acc, x| {
            acc + (x - &mean) * (x - &mean).transpose()
        }) / 500.0;
        assert!((&fit.covariances[0] - expect).amax() < 1e-12);
        let resp = responsibilities(&[mean], &fit.covariances, &aux).unwrap();
        assert!(resp.iter().all(|r| r[0] == 1.0));
    }

    #[test]
    fn separated_components_recover_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let aux: Vec<DVector<f64>> = (0..2000)
            .map(|j| {
                let c = if j % 2 == 0 { -10.0 } else { 10.0 };
                let z: f64 = StandardNormal.sample(&mut rng);
                DVector::from_element(1, c + z)
            })
            .collect();
        let means = [DVector::from_element(1, -10.0), DVector::from_element(1, 10.0)];
        let fit = fit_covariances_em(&means, &[scalar(4.0), scalar(0.25)], &aux, &EmConfig::default()).unwrap();
        for (c, m) in fit.covariances.iter().zip(&means) {
            assert!((0.85..=1.15).contains(&c[(0, 0)]), "{}", c[(0, 0)]);
            let direct: f64 = aux
                .iter()
                .filter(|x| (x[0] - m[0]).abs() < 10.0)
                .map(|x| (x[0] - m[0]).powi(2))
                .sum::<f64>()
                / aux.iter().filter(|x| (x[0] - m[0]).abs() < 10.0).count() as f64;
            assert!((c[(0, 0)] - direct).abs() < 1e-6);
        }
    }

    #[test]
    fn ascent_and_fixed_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let aux: Vec<DVector<f64>> = (0..3000)
            .map(|_| DVector::from_iterator(2, (0..2).map(|_| StandardNormal.sample(&mut rng))))
            .collect();
        let means: Vec<DVector<f64>> = (0..12)
            .map(|i| DVector::from_vec(vec![(i as f64 * 0.7).sin() * 1.5, (i as f64 * 1.3).cos()]))
            .collect();
        let before = means.clone();
        let init = vec![DMatrix::identity(2, 2) * 0.3; 12];
        let fit = fit_covariances_em(&means, &init, &aux, &EmConfig::default()).unwrap();
        assert_eq!(means, before);
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{w:?}");
        }
        let resp = responsibilities(&means, &fit.covariances, &aux).unwrap();
        for r in resp {
            assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn orphan_is_frozen() {
        let aux: Vec<DVector<f64>> = (0..200)
            .map(|j| DVector::from_element(1, (j as f64 / 200.0) - 0.5))
            .collect();
        let means = [DVector::from_element(1, 0.0), DVector::from_element(1, 1e3)];
        let fit = fit_covariances_em(&means, &[scalar(1.0), scalar(0.5)], &aux, &EmConfig::default()).unwrap();
        assert!(fit.frozen[1]);
        assert_eq!(fit.covariances[1][(0, 0)], 0.5);
    }

    #[test]
    fn requires_enough_auxiliary_points() {
        let aux = vec![DVector::zeros(1); 99];
        let means = [DVector::zeros(1), DVector::from_element(1, 1.0)];
        assert!(fit_covariances_em(&means, &[scalar(1.0), scalar(1.0)], &aux, &EmConfig::default()).is_err());
    }
}
