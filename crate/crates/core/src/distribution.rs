//! Input distributions: independent 1-D marginals or a multivariate Gaussian.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, half_log_det, mahalanobis_sq};

/// Target accuracy of numerical CDF inversion, `|F(x) - u|`.
pub const INVERSION_TOLERANCE: f64 = 1e-12;

/// One-dimensional marginal distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Normal { mean: f64, std: f64 },
    Uniform { lower: f64, upper: f64 },
    Exponential { rate: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

impl Marginal {
    pub fn standard_normal() -> Self {
        Marginal::Normal { mean: 0.0, std: 1.0 }
    }

    /// Normal marginal from a mean and coefficient of variation.
    pub fn normal_cov(mean: f64, cov: f64) -> Self {
        Marginal::Normal {
            mean,
            std: (mean * cov).abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Marginal::Normal { mean, std } => mean.is_finite() && std > 0.0 && std.is_finite(),
            Marginal::Uniform { lower, upper } => lower.is_finite() && upper.is_finite() && upper > lower,
            Marginal::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Marginal::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0 && sigma.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("marginal", format!("invalid parameters {self:?}")))
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Normal { mean, std } => std_normal_cdf((x - mean) / std),
            Marginal::Uniform { lower, upper } => ((x - lower) / (upper - lower)).clamp(0.0, 1.0),
            Marginal::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Marginal::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal_cdf((x.ln() - mu) / sigma)
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Normal { mean, std } => std_normal_pdf((x - mean) / std) / std,
            Marginal::Uniform { lower, upper } => {
                if (lower..=upper).contains(&x) {
                    1.0 / (upper - lower)
                } else {
                    0.0
                }
            }
            Marginal::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
            Marginal::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal_pdf((x.ln() - mu) / sigma) / (sigma * x)
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Normal { mean, .. } => mean,
            Marginal::Uniform { lower, upper } => 0.5 * (lower + upper),
            Marginal::Exponential { rate } => 1.0 / rate,
            Marginal::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
        }
    }

    pub fn std(&self) -> f64 {
        match *self {
            Marginal::Normal { std, .. } => std,
            Marginal::Uniform { lower, upper } => (upper - lower) / 12f64.sqrt(),
            Marginal::Exponential { rate } => 1.0 / rate,
            Marginal::LogNormal { mu, sigma } => {
                let s2 = sigma * sigma;
                ((s2.exp() - 1.0) * (2.0 * mu + s2).exp()).sqrt()
            }
        }
    }

    /// Closed form where one exists, otherwise bracketed bisection followed
    /// by a Newton polish to `|F(x) - u| <= INVERSION_TOLERANCE`.
    pub fn inverse_cdf(&self, u: f64) -> Result<f64> {
        let fail = || Error::NumericalInversion {
            quantile: u,
            coordinate: 0,
        };
        if !(0.0..=1.0).contains(&u) || u.is_nan() {
            return Err(fail());
        }
        match *self {
            Marginal::Uniform { lower, upper } => Ok(lower + u * (upper - lower)),
            Marginal::Exponential { rate } => {
                if u >= 1.0 {
                    Err(fail())
                } else {
                    Ok(-(-u).ln_1p() / rate)
                }
            }
            Marginal::Normal { mean, std } => {
                if u <= 0.0 || u >= 1.0 {
                    return Err(fail());
                }
                let z = invert_monotone(std_normal_cdf, std_normal_pdf, u, -40.0, 40.0).ok_or_else(fail)?;
                Ok(mean + std * z)
            }
            Marginal::LogNormal { mu, sigma } => {
                if u <= 0.0 || u >= 1.0 {
                    return Err(fail());
                }
                let z = invert_monotone(std_normal_cdf, std_normal_pdf, u, -40.0, 40.0).ok_or_else(fail)?;
                Ok((mu + sigma * z).exp())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Normal { mean, std } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + std * z
            }
            Marginal::Uniform { lower, upper } => lower + rng.random::<f64>() * (upper - lower),
            Marginal::Exponential { rate } => -(1.0 - rng.random::<f64>()).ln() / rate,
            Marginal::LogNormal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                (mu + sigma * z).exp()
            }
        }
    }
}

fn invert_monotone(cdf: impl Fn(f64) -> f64, pdf: impl Fn(f64) -> f64, u: f64, lo: f64, hi: f64) -> Option<f64> {
    let (mut lo, mut hi) = (lo, hi);
    if cdf(lo) > u || cdf(hi) < u {
        return None;
    }
    // bisection until the bracket is narrow, then Newton inside the bracket
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-6 {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..50 {
        let r = cdf(x) - u;
        if r.abs() <= INVERSION_TOLERANCE {
            return Some(x);
        }
        let d = pdf(x);
        let mut next = x - r / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if cdf(next) < u {
            lo = next;
        } else {
            hi = next;
        }
        if next == x {
            break;
        }
        x = next;
    }
    ((cdf(x) - u).abs() <= INVERSION_TOLERANCE).then_some(x)
}

/// Joint distribution of the random inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    IndependentMarginals { marginals: Vec<Marginal> },
    MultivariateGaussian { mean: Vec<f64>, covariance: Vec<Vec<f64>> },
}

impl DistributionSpec {
    pub fn standard_normal(dimension: usize) -> Self {
        DistributionSpec::IndependentMarginals {
            marginals: vec![Marginal::standard_normal(); dimension],
        }
    }

    pub fn independent(marginals: Vec<Marginal>) -> Self {
        DistributionSpec::IndependentMarginals { marginals }
    }

    pub fn gaussian(mean: &DVector<f64>, covariance: &DMatrix<f64>) -> Self {
        DistributionSpec::MultivariateGaussian {
            mean: mean.iter().copied().collect(),
            covariance: covariance.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            DistributionSpec::IndependentMarginals { marginals } => marginals.len(),
            DistributionSpec::MultivariateGaussian { mean, .. } => mean.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DistributionSpec::IndependentMarginals { marginals } => {
                if marginals.is_empty() {
                    return Err(Error::invalid("target", "no marginals"));
                }
                marginals.iter().try_for_each(Marginal::validate)
            }
            DistributionSpec::MultivariateGaussian { .. } => self.gaussian_parts().map(|_| ()),
        }
    }

    /// Mean vector and lower Cholesky factor of a Gaussian target.
    pub(crate) fn gaussian_parts(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        match self {
            DistributionSpec::MultivariateGaussian { mean, covariance } => {
                let q = mean.len();
                if q == 0 || covariance.len() != q || covariance.iter().any(|r| r.len() != q) {
                    return Err(Error::invalid("target", "covariance shape does not match mean"));
                }
                let cov = DMatrix::from_fn(q, q, |i, j| covariance[i][j]);
                if (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
                    return Err(Error::invalid("target", "covariance is not symmetric"));
                }
                let l = cholesky_lower(&cov).ok_or(Error::NotPositiveDefinite { component: 0 })?;
                Ok((DVector::from_vec(mean.clone()), l))
            }
            DistributionSpec::IndependentMarginals { .. } => {
                Err(Error::invalid("target", "not a multivariate Gaussian"))
            }
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        match self {
            DistributionSpec::IndependentMarginals { marginals } => {
                DVector::from_iterator(marginals.len(), marginals.iter().map(Marginal::mean))
            }
            DistributionSpec::MultivariateGaussian { mean, .. } => DVector::from_vec(mean.clone()),
        }
    }

    /// Per-axis standard deviation.
    pub fn axis_std(&self) -> DVector<f64> {
        match self {
            DistributionSpec::IndependentMarginals { marginals } => {
                DVector::from_iterator(marginals.len(), marginals.iter().map(Marginal::std))
            }
            DistributionSpec::MultivariateGaussian { covariance, .. } => DVector::from_iterator(
                covariance.len(),
                covariance.iter().enumerate().map(|(i, r)| r[i].sqrt()),
            ),
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            DistributionSpec::IndependentMarginals { marginals } => DMatrix::from_diagonal(&DVector::from_iterator(
                marginals.len(),
                marginals.iter().map(|m| m.std().powi(2)),
            )),
            DistributionSpec::MultivariateGaussian { covariance, .. } => {
                let q = covariance.len();
                DMatrix::from_fn(q, q, |i, j| covariance[i][j])
            }
        }
    }

    /// Joint CDF; only defined for independent marginals.
    pub fn cdf(&self, x: &[f64]) -> Option<f64> {
        match self {
            DistributionSpec::IndependentMarginals { marginals } => {
                Some(marginals.iter().zip(x).map(|(m, &v)| m.cdf(v)).product())
            }
            DistributionSpec::MultivariateGaussian { .. } => None,
        }
    }

    /// Builds a reusable sampler / density evaluator.
    pub fn sampler(&self) -> Result<TargetSampler> {
        self.validate()?;
        let gaussian = match self {
            DistributionSpec::MultivariateGaussian { .. } => Some(self.gaussian_parts()?),
            _ => None,
        };
        Ok(TargetSampler {
            spec: self.clone(),
            gaussian,
        })
    }
}

/// A validated target with cached factorization.
#[derive(Clone, Debug)]
pub struct TargetSampler {
    spec: DistributionSpec,
    gaussian: Option<(DVector<f64>, DMatrix<f64>)>,
}

impl TargetSampler {
    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match (&self.spec, &self.gaussian) {
            (DistributionSpec::IndependentMarginals { marginals }, _) => {
                DVector::from_iterator(marginals.len(), marginals.iter().map(|m| m.sample(rng)))
            }
            (_, Some((mean, l))) => {
                let z = DVector::from_iterator(
                    mean.len(),
                    (0..mean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)),
                );
                mean + l * z
            }
            _ => unreachable!("sampler built from a validated spec"),
        }
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<DVector<f64>> {
        (0..count).map(|_| self.sample(rng)).collect()
    }

    pub fn pdf(&self, x: &DVector<f64>) -> f64 {
        match (&self.spec, &self.gaussian) {
            (DistributionSpec::IndependentMarginals { marginals }, _) => {
                marginals.iter().zip(x.iter()).map(|(m, &v)| m.pdf(v)).product()
            }
            (_, Some((mean, l))) => {
                let q = mean.len() as f64;
                let m2 = mahalanobis_sq(l, &(x - mean));
                (-0.5 * m2 - half_log_det(l) - 0.5 * q * (2.0 * PI).ln()).exp()
            }
            _ => unreachable!("sampler built from a validated spec"),
        }
    }

    /// Maps a point to coordinates in which the target has independent
    /// marginals (identity for independent targets, whitening for Gaussians).
    pub(crate) fn to_independent(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.gaussian {
            Some((mean, l)) => l
                .clone()
                .solve_lower_triangular(&(x - mean))
                .expect("Cholesky factor has a positive diagonal"),
            None => x.clone(),
        }
    }

    /// Marginals matching `to_independent` coordinates.
    pub(crate) fn independent_marginals(&self) -> Vec<Marginal> {
        match &self.spec {
            DistributionSpec::IndependentMarginals { marginals } => marginals.clone(),
            DistributionSpec::MultivariateGaussian { mean, .. } => vec![Marginal::standard_normal(); mean.len()],
        }
    }
}
