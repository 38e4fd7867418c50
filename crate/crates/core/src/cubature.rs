//! Third-degree spherical-radial cubature.
//!
//! A component `N(μ, Σ)` in `q` dimensions is represented by the `2q` points
//! `μ ± √q L e_j` (`L Lᵀ = Σ`), each with weight `1/(2q)`. The rule integrates
//! every polynomial of total degree at most three exactly against the
//! Gaussian, which is what makes the propagated mean and covariance exact for
//! affine maps.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, nearest_psd, symmetrize};
use crate::mixture::GaussianComponent;

/// Evaluation points and weights for one component.
#[derive(Clone, Debug, PartialEq)]
pub struct CubatureSet {
    pub points: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
}

impl CubatureSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Propagated first and second moments.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentPair {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Unit-covariance nodes `±√q e_j`, ordered `+e_1, −e_1, +e_2, −e_2, …`.
pub fn standard_nodes(q: usize) -> Vec<DVector<f64>> {
    let r = (q as f64).sqrt();
    (0..2 * q)
        .map(|i| {
            let mut v = DVector::zeros(q);
            v[i / 2] = if i % 2 == 0 { r } else { -r };
            v
        })
        .collect()
}

/// Nodes `μ + L ξ_i` for a lower factor `L`.
pub fn cubature_from_factor(mean: &DVector<f64>, l: &DMatrix<f64>) -> CubatureSet {
    let q = mean.len();
    let r = (q as f64).sqrt();
    let points = (0..2 * q)
        .map(|i| {
            let sign = if i % 2 == 0 { r } else { -r };
            mean + l.column(i / 2) * sign
        })
        .collect();
    CubatureSet {
        points,
        weights: vec![1.0 / (2 * q) as f64; 2 * q],
    }
}

/// Cubature set for a mean and covariance; fails if `Σ` is not positive
/// definite.
pub fn cubature_from_moments(mean: &DVector<f64>, covariance: &DMatrix<f64>) -> Result<CubatureSet> {
    let l = cholesky_lower(covariance).ok_or(Error::NotPositiveDefinite { component: 0 })?;
    Ok(cubature_from_factor(mean, &l))
}

/// Cubature set of a mixture component, using its cached factor.
pub fn cubature_points(component: &GaussianComponent) -> CubatureSet {
    cubature_from_factor(component.mean(), component.cholesky())
}

fn check_finite(point: &DVector<f64>, image: &DVector<f64>) -> Result<()> {
    if image.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            point: point.iter().copied().collect(),
        })
    }
}

/// Weighted mean and scatter of mapped nodes, symmetrized and clamped to
/// the PSD cone.
pub fn moments_from_images(images: &[DVector<f64>], weights: &[f64]) -> MomentPair {
    let n = images[0].len();
    let mut mean = DVector::zeros(n);
    for (y, &w) in images.iter().zip(weights) {
        mean.axpy(w, y, 1.0);
    }
    let mut cov = DMatrix::zeros(n, n);
    for (y, &w) in images.iter().zip(weights) {
        let d = y - &mean;
        cov.ger(w, &d, &d, 1.0);
    }
    let cov = symmetrize(&cov);
    let covariance = if cov.clone().cholesky().is_some() {
        cov
    } else {
        nearest_psd(&cov)
    };
    MomentPair { mean, covariance }
}

/// Pushes the nodes through a fallible map and returns the moments of the
/// images.
pub fn propagate_moments_with<F>(set: &CubatureSet, map: F) -> Result<MomentPair>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let images = set
        .points
        .iter()
        .map(|p| {
            let y = map(p)?;
            check_finite(p, &y)?;
            Ok(y)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(moments_from_images(&images, &set.weights))
}

/// Mean and covariance of `map(θ)` for `θ ~ component`, by the cubature
/// rule.
pub fn propagate_moments<F>(component: &GaussianComponent, map: F) -> Result<MomentPair>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    propagate_moments_with(&cubature_points(component), |x| Ok(map(x)))
}

/// `E[map(θ)]` for `θ ~ component`.
pub fn gauss_expectation<F>(map: F, component: &GaussianComponent) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let set = cubature_points(component);
    let mut acc: Option<DVector<f64>> = None;
    for (p, &w) in set.points.iter().zip(&set.weights) {
        let y = map(p);
        check_finite(p, &y)?;
        match acc.as_mut() {
            Some(a) => a.axpy(w, &y, 1.0),
            None => acc = Some(y * w),
        }
    }
    Ok(acc.expect("at least two nodes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn component(mean: &[f64], cov: &[f64]) -> GaussianComponent {
        let q = mean.len();
        GaussianComponent::new(1.0, DVector::from_row_slice(mean), DMatrix::from_row_slice(q, q, cov)).unwrap()
    }

    #[test]
    fn standard_cross_layout() {
        let set = cubature_points(&GaussianComponent::standard(2));
        let s = 2f64.sqrt();
        let expect = [[s, 0.0], [-s, 0.0], [0.0, s], [0.0, -s]];
        assert_eq!(set.len(), 4);
        for (p, e) in set.points.iter().zip(expect) {
            assert_relative_eq!(p[0], e[0], epsilon = 1e-15);
            assert_relative_eq!(p[1], e[1], epsilon = 1e-15);
        }
        assert_eq!(set.weights, vec![0.25; 4]);
    }

    #[test]
    fn one_dimensional_nodes() {
        let set = cubature_points(&component(&[3.0], &[4.0]));
        assert_eq!(set.points[0][0], 5.0);
        assert_eq!(set.points[1][0], 1.0);
        assert_eq!(set.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn linear_map_example() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 5.0, 1.0, 2.0]);
        let m = propagate_moments(&GaussianComponent::standard(2), |x| &a * x).unwrap();
        assert!(m.mean.amax() < 1e-12);
        let expect = DMatrix::from_row_slice(2, 2, &[34.0, 13.0, 13.0, 5.0]);
        assert!((m.covariance - expect).amax() < 1e-12);
    }

    #[test]
    fn square_map_shows_degree_limit() {
        let m = propagate_moments(&GaussianComponent::standard(1), |x| x.map(|v| v * v)).unwrap();
        assert_relative_eq!(m.mean[0], 1.0, epsilon = 1e-15);
        assert_eq!(m.covariance[(0, 0)], 0.0);
    }

    #[test]
    fn expectation_examples() {
        let c = component(&[1.0, -2.0], &[2.0, 0.3, 0.3, 1.0]);
        let e = gauss_expectation(|_| DVector::from_element(1, 7.5), &c).unwrap();
        assert_relative_eq!(e[0], 7.5, epsilon = 1e-14);
        let e = gauss_expectation(|x| x.clone(), &c).unwrap();
        assert_relative_eq!(e[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(e[1], -2.0, epsilon = 1e-14);
        let e = gauss_expectation(
            |x| DVector::from_element(1, x[0] * x[1]),
            &GaussianComponent::standard(2),
        )
        .unwrap();
        assert_eq!(e[0], 0.0);
    }

    #[test]
    fn non_finite_image_is_reported() {
        let err = propagate_moments(&GaussianComponent::standard(1), |x| x.map(|v| 1.0 / (v - 1.0))).unwrap_err();
        assert!(matches!(err, Error::NonFinite { ref point } if point == &vec![1.0]));
    }
}
