//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

/// Relative eigenvalue floor applied to fitted and propagated covariances:
/// eigenvalues are clamped below at `COVARIANCE_FLOOR * trace / dim`.
pub const COVARIANCE_FLOOR: f64 = 1e-8;

/// Lower Cholesky factor, or `None` if the matrix is not positive definite.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    m.clone().cholesky().map(|c| c.l())
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Rebuilds a symmetric matrix with every eigenvalue clamped below at `floor`.
/// Returns the matrix and whether any eigenvalue was raised.
pub fn clamp_eigenvalues(m: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, bool) {
    let sym = symmetrize(m);
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return (sym, false);
    }
    let clamped = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    let rebuilt = v * DMatrix::from_diagonal(&clamped) * v.transpose();
    (symmetrize(&rebuilt), true)
}

/// Symmetrizes and clamps negative eigenvalues (round-off) to zero.
pub fn nearest_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    clamp_eigenvalues(m, 0.0).0
}

/// Applies the relative floor `COVARIANCE_FLOOR * trace / dim`. A matrix with
/// zero trace has no scale to anchor to and is returned unchanged.
pub fn floor_covariance(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let dim = m.nrows().max(1) as f64;
    let floor = COVARIANCE_FLOOR * m.trace() / dim;
    if floor <= 0.0 || !floor.is_finite() {
        return (symmetrize(m), false);
    }
    clamp_eigenvalues(m, floor)
}

/// Sum of log-diagonal of a lower Cholesky factor, i.e. `½ log det Σ`.
pub fn half_log_det(l: &DMatrix<f64>) -> f64 {
    l.diagonal().iter().map(|d| d.ln()).sum()
}

/// Squared Mahalanobis norm `‖L⁻¹ d‖²` via forward substitution.
pub fn mahalanobis_sq(l: &DMatrix<f64>, d: &DVector<f64>) -> f64 {
    let n = d.len();
    let mut y = vec![0.0; n];
    let mut acc = 0.0;
    for i in 0..n {
        let mut s = d[i];
        for (j, yj) in y.iter().enumerate().take(i) {
            s -= l[(i, j)] * yj;
        }
        let yi = s / l[(i, i)];
        y[i] = yi;
        acc += yi * yi;
    }
    acc
}

/// Stable `log Σ exp(xᵢ)`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mahalanobis_matches_explicit_inverse() {
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let l = cholesky_lower(&s).unwrap();
        let d = DVector::from_vec(vec![0.7, -1.2]);
        let direct = (d.transpose() * s.try_inverse().unwrap() * &d)[(0, 0)];
        assert_relative_eq!(mahalanobis_sq(&l, &d), direct, epsilon = 1e-14);
    }

    #[test]
    fn clamp_raises_only_small_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-3]);
        let (c, active) = clamp_eigenvalues(&m, 1e-6);
        assert!(active);
        assert_relative_eq!(c[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(c[(1, 1)], 1e-6, epsilon = 1e-14);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_relative_eq!(log_sum_exp(&[-1000.0, -1000.0]), -1000.0 + 2f64.ln());
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }
}
