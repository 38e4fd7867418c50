use std::f64::consts::PI;
use std::fs::File;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, half_log_det, log_sum_exp, mahalanobis_sq, symmetrize};

/// Tolerance on `Σ π_k = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// One weighted Gaussian `π N(μ, Σ)` with its Cholesky factor cached.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianComponent {
    weight: f64,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    cholesky: DMatrix<f64>,
    log_normalizer: f64,
}

impl GaussianComponent {
    /// Validates shape and positive definiteness. The covariance is
    /// symmetrized before factoring.
    pub fn new(weight: f64, mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let q = mean.len();
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::invalid("weight", format!("{weight} outside [0, 1]")));
        }
        if covariance.nrows() != q || covariance.ncols() != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                actual: covariance.nrows(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                point: mean.iter().copied().collect(),
            });
        }
        let covariance = symmetrize(&covariance);
        let cholesky = cholesky_lower(&covariance).ok_or(Error::NotPositiveDefinite { component: 0 })?;
        let log_normalizer = -half_log_det(&cholesky) - 0.5 * q as f64 * (2.0 * PI).ln();
        Ok(GaussianComponent {
            weight,
            mean,
            covariance,
            cholesky,
            log_normalizer,
        })
    }

    pub fn standard(dimension: usize) -> Self {
        Self::new(1.0, DVector::zeros(dimension), DMatrix::identity(dimension, dimension))
            .expect("identity covariance is positive definite")
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Lower factor `L` with `L Lᵀ = Σ`.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.cholesky
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    /// `log N(x; μ, Σ)`, without the weight.
    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        self.log_normalizer - 0.5 * mahalanobis_sq(&self.cholesky, &(x - &self.mean))
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }
}

/// Finite mixture `p(x) = Σ π_k N(x; μ_k, Σ_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "MixtureRecord", try_from = "MixtureRecord")]
pub struct MixtureModel {
    components: Vec<GaussianComponent>,
    dimension: usize,
}

impl MixtureModel {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let dimension = components
            .first()
            .map(GaussianComponent::dimension)
            .ok_or_else(|| Error::invalid("components", "a mixture needs at least one component"))?;
        if let Some(c) = components.iter().find(|c| c.dimension() != dimension) {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                actual: c.dimension(),
            });
        }
        let total: f64 = components.iter().map(GaussianComponent::weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::invalid("weights", format!("weights sum to {total}, not 1")));
        }
        Ok(MixtureModel { components, dimension })
    }

    /// Equal weights `1/K` over the given means and covariances.
    pub fn equal_weights(means: &[DVector<f64>], covariances: &[DMatrix<f64>]) -> Result<Self> {
        if means.len() != covariances.len() {
            return Err(Error::DimensionMismatch {
                expected: means.len(),
                actual: covariances.len(),
            });
        }
        let w = 1.0 / means.len().max(1) as f64;
        let components = means
            .iter()
            .zip(covariances)
            .enumerate()
            .map(|(k, (m, c))| GaussianComponent::new(w, m.clone(), c.clone()).map_err(|e| e.in_component(k)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(components)
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(GaussianComponent::weight).collect()
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| c.weight.ln() + c.log_pdf(x))
            .collect();
        log_sum_exp(&terms)
    }

    /// Mixture density, accumulated in log space.
    pub fn density(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: x.len(),
            });
        }
        Ok(self.log_density(x).exp())
    }

    /// Mixture mean and covariance,
    /// `μ = Σ π_k μ_k` and `Σ π_k (Σ_k + μ_k μ_kᵀ) − μ μᵀ`.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let q = self.dimension;
        let mut mean = DVector::zeros(q);
        let mut second = DMatrix::zeros(q, q);
        for c in &self.components {
            mean.axpy(c.weight, &c.mean, 1.0);
            second += (&c.covariance + &c.mean * c.mean.transpose()) * c.weight;
        }
        let cov = second - &mean * mean.transpose();
        (mean, symmetrize(&cov))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        serde_json::to_writer_pretty(File::create(path)?, self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ComponentRecord {
    weight: f64,
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MixtureRecord {
    dimension: usize,
    components: Vec<ComponentRecord>,
}

impl From<MixtureModel> for MixtureRecord {
    fn from(m: MixtureModel) -> Self {
        MixtureRecord {
            dimension: m.dimension,
            components: m
                .components
                .into_iter()
                .map(|c| ComponentRecord {
                    weight: c.weight,
                    mean: c.mean.iter().copied().collect(),
                    covariance: c.covariance.row_iter().map(|r| r.iter().copied().collect()).collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<MixtureRecord> for MixtureModel {
    type Error = Error;

    fn try_from(r: MixtureRecord) -> Result<Self> {
        let components = r
            .components
            .into_iter()
            .enumerate()
            .map(|(k, c)| {
                let q = c.mean.len();
                if q != r.dimension || c.covariance.len() != q || c.covariance.iter().any(|row| row.len() != q) {
                    return Err(Error::DimensionMismatch {
                        expected: r.dimension,
                        actual: q,
                    }
                    .in_component(k));
                }
                let cov = DMatrix::from_fn(q, q, |i, j| c.covariance[i][j]);
                GaussianComponent::new(c.weight, DVector::from_vec(c.mean), cov).map_err(|e| e.in_component(k))
            })
            .collect::<Result<Vec<_>>>()?;
        MixtureModel::new(components)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_point() -> MixtureModel {
        let means = [DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)];
        let covs = [DMatrix::identity(1, 1), DMatrix::identity(1, 1)];
        MixtureModel::equal_weights(&means, &covs).unwrap()
    }

    #[test]
    fn standard_component_density() {
        let m = MixtureModel::new(vec![GaussianComponent::standard(2)]).unwrap();
        assert_relative_eq!(
            m.density(&DVector::zeros(2)).unwrap(),
            1.0 / (2.0 * PI),
            epsilon = 1e-15
        );
    }

    #[test]
    fn two_component_density_at_zero() {
        let expect = (-0.5f64).exp() / (2.0 * PI).sqrt();
        assert_relative_eq!(
            two_point().density(&DVector::zeros(1)).unwrap(),
            expect,
            epsilon = 1e-15
        );
        assert_relative_eq!(expect, 0.24197, epsilon = 1e-5);
    }

    #[test]
    fn far_tail_is_finite_and_non_negative() {
        let m = MixtureModel::new(vec![GaussianComponent::standard(2)]).unwrap();
        let x = DVector::from_vec(vec![40.0, 0.0]);
        let d = m.density(&x).unwrap();
        assert!(d >= 0.0 && !d.is_nan());
        assert_relative_eq!(m.log_density(&x), -800.0 - (2.0 * PI).ln(), epsilon = 1e-12);
    }

    #[test]
    fn mixture_moments() {
        let (mean, cov) = two_point().moments();
        assert_eq!(mean[0], 0.0);
        assert_relative_eq!(cov[(0, 0)], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_weights_and_covariances() {
        let c = GaussianComponent::standard(1).with_weight(0.4);
        assert!(MixtureModel::new(vec![c]).is_err());
        let bad = GaussianComponent::new(
            1.0,
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
        );
        assert!(matches!(bad, Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn cholesky_reproduces_covariance() {
        let s = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let c = GaussianComponent::new(1.0, DVector::zeros(3), s.clone()).unwrap();
        let back = c.cholesky() * c.cholesky().transpose();
        assert!((back - &s).amax() <= 1e-12 * s.amax());
    }

    #[test]
    fn json_round_trip() {
        let m = two_point();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"components\""));
        let back: MixtureModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
