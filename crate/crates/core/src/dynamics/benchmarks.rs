use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{SdeModel, StaticMap, VectorField};
use crate::error::{Error, Result};

/// `x = A θ + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let offset = DVector::zeros(matrix.nrows());
        LinearMap { matrix, offset }
    }
}

impl StaticMap for LinearMap {
    fn input_dimension(&self) -> usize {
        self.matrix.ncols()
    }

    fn output_dimension(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        if input.len() != self.matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.ncols(),
                actual: input.len(),
            });
        }
        Ok(&self.matrix * input + &self.offset)
    }
}

/// `x₁ = √(θ₁² + θ₂²)`, `x₂ = θ₁`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NonlinearMap;

impl StaticMap for NonlinearMap {
    fn input_dimension(&self) -> usize {
        2
    }

    fn output_dimension(&self) -> usize {
        2
    }

    fn apply(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        if input.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                actual: input.len(),
            });
        }
        Ok(DVector::from_vec(vec![input[0].hypot(input[1]), input[0]]))
    }
}

/// Parameters of `ẍ + 2ζω₀ẋ + ω₀²(γx + εx³) = W(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuffingParams {
    pub zeta: f64,
    pub omega0: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

impl Default for DuffingParams {
    fn default() -> Self {
        DuffingParams {
            zeta: 0.2,
            omega0: 1.0,
            epsilon: 0.1,
            gamma: -1.0,
        }
    }
}

/// Default white-noise intensity: the value `4ζω₀` for which the stationary
/// density has the unit-variance velocity factor `e^{−x₂²/2}`.
pub const DUFFING_NOISE_INTENSITY: f64 = 0.8;

/// Reference normalizing constant of the nominal stationary density,
/// `p = e^{…} / (47.9724 √(2π))`.
pub const DUFFING_REFERENCE_NORMALIZER: f64 = 47.9724;

/// Drift `(x₂, −2ζω₀x₂ − ω₀²γx₁ − ω₀²εx₁³)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DuffingDrift {
    pub params: DuffingParams,
}

impl VectorField for DuffingDrift {
    fn dimension(&self) -> usize {
        2
    }

    fn eval(&self, _t: f64, x: &DVector<f64>, out: &mut DVector<f64>) {
        let DuffingParams {
            zeta,
            omega0,
            epsilon,
            gamma,
        } = self.params;
        let w2 = omega0 * omega0;
        out[0] = x[1];
        out[1] = -2.0 * zeta * omega0 * x[1] - w2 * gamma * x[0] - w2 * epsilon * x[0].powi(3);
    }
}

/// Closed-form densities of the benchmark outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticOracle {
    /// Image of a standard bivariate normal under `A = [[3, 5], [1, 2]]`.
    LinearMap,
    /// Image of a standard bivariate normal under [`NonlinearMap`].
    NonlinearMap,
    /// Stationary Fokker–Planck solution of the noisy Duffing oscillator,
    /// `p ∝ exp(−κ[ω₀²(γx₁²/2 + εx₁⁴/4) + x₂²/2])` with `κ = 4ζω₀/D`.
    DuffingStationary {
        params: DuffingParams,
        noise_intensity: f64,
        normalizer: f64,
    },
}

impl AnalyticOracle {
    /// Stationary Duffing density. The nominal configuration uses the
    /// published constant verbatim; any other uses quadrature in `x₁`.
    pub fn duffing(params: DuffingParams, noise_intensity: f64) -> Result<Self> {
        if !(params.epsilon > 0.0) || !(noise_intensity > 0.0) || !(params.zeta > 0.0) || !(params.omega0 > 0.0) {
            return Err(Error::invalid(
                "duffing",
                "a stationary density needs ε > 0, D > 0, ζ > 0 and ω₀ > 0",
            ));
        }
        let normalizer = if params == DuffingParams::default() && noise_intensity == DUFFING_NOISE_INTENSITY {
            DUFFING_REFERENCE_NORMALIZER * (2.0 * PI).sqrt()
        } else {
            let kappa = 4.0 * params.zeta * params.omega0 / noise_intensity;
            duffing_position_integral(&params, kappa) * (2.0 * PI / kappa).sqrt()
        };
        Ok(AnalyticOracle::DuffingStationary {
            params,
            noise_intensity,
            normalizer,
        })
    }

    pub fn in_support(&self, x: &DVector<f64>) -> bool {
        match self {
            AnalyticOracle::NonlinearMap => x[0] > 0.0 && x[1].abs() < x[0],
            _ => true,
        }
    }

    pub fn density(&self, x: &DVector<f64>) -> f64 {
        match self {
            AnalyticOracle::LinearMap => {
                let a = 2.0 * x[0] - 5.0 * x[1];
                let b = -x[0] + 3.0 * x[1];
                (-0.5 * (a * a + b * b)).exp() / (2.0 * PI)
            }
            AnalyticOracle::NonlinearMap => {
                if !self.in_support(x) {
                    return 0.0;
                }
                let (x1, x2) = (x[0], x[1]);
                x1 / (x1 * x1 - x2 * x2).sqrt() * (-0.5 * x1 * x1).exp() / PI
            }
            AnalyticOracle::DuffingStationary {
                params,
                noise_intensity,
                normalizer,
            } => {
                let kappa = 4.0 * params.zeta * params.omega0 / noise_intensity;
                (-kappa * (duffing_potential(params, x[0]) + 0.5 * x[1] * x[1])).exp() / normalizer
            }
        }
    }
}

fn duffing_potential(p: &DuffingParams, x1: f64) -> f64 {
    let w2 = p.omega0 * p.omega0;
    w2 * (0.5 * p.gamma * x1 * x1 + 0.25 * p.epsilon * x1.powi(4))
}

fn duffing_position_integral(p: &DuffingParams, kappa: f64) -> f64 {
    let g = |x: f64| (-kappa * duffing_potential(p, x)).exp();
    // Extend the range until the integrand is negligible against its peak.
    let peak = (0..=4000).map(|i| g(i as f64 * 0.01)).fold(0.0, f64::max);
    let mut l = 1.0;
    while g(l) > 1e-18 * peak {
        l *= 1.5;
    }
    let n = 20_000;
    let h = 2.0 * l / n as f64;
    let mut s = g(-l) + g(l);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * g(-l + i as f64 * h);
    }
    s * h / 3.0
}

/// Linear benchmark map `A = [[3, 5], [1, 2]]` and its exact output density.
pub fn linear_map_model() -> (LinearMap, AnalyticOracle) {
    (
        LinearMap::new(DMatrix::from_row_slice(2, 2, &[3.0, 5.0, 1.0, 2.0])),
        AnalyticOracle::LinearMap,
    )
}

/// Polar-type benchmark map and its exact output density.
pub fn nonlinear_map_model() -> (NonlinearMap, AnalyticOracle) {
    (NonlinearMap, AnalyticOracle::NonlinearMap)
}

/// Duffing oscillator driven by white noise on the velocity, together with
/// its stationary density when one exists.
pub fn duffing_model(params: DuffingParams, noise_intensity: f64) -> Result<(SdeModel, Option<AnalyticOracle>)> {
    if !(params.zeta > 0.0 && params.omega0 > 0.0) {
        return Err(Error::invalid("duffing", "ζ and ω₀ must be positive"));
    }
    if !(noise_intensity >= 0.0) {
        return Err(Error::invalid("noise_intensity", "must be non-negative"));
    }
    let model = SdeModel::new(
        Arc::new(DuffingDrift { params }),
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_element(1, 1, noise_intensity),
    )?;
    let oracle = AnalyticOracle::duffing(params, noise_intensity).ok();
    Ok((model, oracle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    fn integrate(oracle: &AnalyticOracle, lo: [f64; 2], hi: [f64; 2], n: usize) -> f64 {
        let h = [(hi[0] - lo[0]) / n as f64, (hi[1] - lo[1]) / n as f64];
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += oracle.density(&v(lo[0] + (i as f64 + 0.5) * h[0], lo[1] + (j as f64 + 0.5) * h[1]));
            }
        }
        s * h[0] * h[1]
    }

    #[test]
    fn linear_map_examples() {
        let (map, oracle) = linear_map_model();
        assert_eq!(map.apply(&v(0.0, 0.0)).unwrap(), v(0.0, 0.0));
        assert_eq!(map.apply(&v(1.0, 1.0)).unwrap(), v(8.0, 3.0));
        assert_relative_eq!(oracle.density(&v(0.0, 0.0)), 1.0 / (2.0 * PI), epsilon = 1e-15);
        let inverse = DMatrix::from_row_slice(2, 2, &[2.0, -5.0, -1.0, 3.0]);
        assert_relative_eq!(inverse.determinant(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(map.matrix.determinant(), 1.0, epsilon = 1e-14);
        let x = v(0.3, -0.7);
        let theta = &inverse * &x;
        let direct = (-0.5 * theta.norm_squared()).exp() / (2.0 * PI);
        assert_relative_eq!(oracle.density(&x), direct, epsilon = 1e-15);
    }

    #[test]
    fn nonlinear_map_examples() {
        let (map, oracle) = nonlinear_map_model();
        assert_eq!(map.apply(&v(3.0, 4.0)).unwrap(), v(5.0, 3.0));
        assert_relative_eq!(oracle.density(&v(1.0, 0.0)), (-0.5f64).exp() / PI, epsilon = 1e-15);
        assert_relative_eq!(oracle.density(&v(1.0, 0.0)), 0.19306, epsilon = 1e-5);
        assert_eq!(oracle.density(&v(1.0, 2.0)), 0.0);
        assert_eq!(oracle.density(&v(1.0, 1.0)), 0.0);
        assert_eq!(oracle.density(&v(1.0, -1.0)), 0.0);
    }

    #[test]
    fn duffing_drift_example_and_oddness() {
        let d = DuffingDrift {
            params: DuffingParams::default(),
        };
        let mut out = DVector::zeros(2);
        d.eval(0.0, &v(1.0, 0.0), &mut out);
        assert_relative_eq!(out[1], 0.9, epsilon = 1e-15);
        assert_eq!(out[0], 0.0);
        let mut neg = DVector::zeros(2);
        for x in [v(0.3, -1.2), v(-2.5, 0.4), v(4.0, 3.0)] {
            d.eval(0.0, &x, &mut out);
            d.eval(0.0, &(-&x), &mut neg);
            assert_eq!(out, -&neg);
        }
    }

    #[test]
    fn duffing_oracle_shape() {
        let (_, oracle) = duffing_model(DuffingParams::default(), DUFFING_NOISE_INTENSITY).unwrap();
        let oracle = oracle.unwrap();
        for x in [v(0.7, 1.1), v(3.0, -0.2), v(-4.5, 2.0)] {
            let p = oracle.density(&x);
            assert_eq!(p, oracle.density(&v(-x[0], x[1])));
            assert_eq!(p, oracle.density(&v(x[0], -x[1])));
        }
        // exponent x²/2 − x⁴/40 is stationary at ±√10
        let s = 10f64.sqrt();
        let grad = |x: f64| x - x.powi(3) / 10.0;
        assert!(grad(s).abs() < 1e-14 && grad(-s).abs() < 1e-14);
        let h = 1e-4;
        let p = |x: f64| oracle.density(&v(x, 0.0));
        assert!(p(s) > p(s - h) && p(s) > p(s + h));
    }

    #[test]
    fn oracles_integrate_to_one() {
        let (_, duffing) = duffing_model(DuffingParams::default(), DUFFING_NOISE_INTENSITY).unwrap();
        let cases = [
            (AnalyticOracle::LinearMap, [-40.0, -15.0], [40.0, 15.0], 1600),
            (duffing.unwrap(), [-9.0, -9.0], [9.0, 9.0], 900),
        ];
        for (oracle, lo, hi, n) in cases {
            let mass = integrate(&oracle, lo, hi, n);
            assert!((mass - 1.0).abs() < 0.01, "{oracle:?}: {mass}");
        }
    }

    #[test]
    fn nonlinear_oracle_integrates_to_one() {
        // x₂ = x₁ sin φ removes the edge singularity of the Jacobian factor
        let oracle = AnalyticOracle::NonlinearMap;
        let (n, m) = (2000, 400);
        let h = 10.0 / n as f64;
        let hp = PI / m as f64;
        let mut mass = 0.0;
        for i in 0..n {
            let x1 = (i as f64 + 0.5) * h;
            for j in 0..m {
                let phi = -0.5 * PI + (j as f64 + 0.5) * hp;
                mass += oracle.density(&v(x1, x1 * phi.sin())) * x1 * phi.cos() * h * hp;
            }
        }
        assert!((mass - 1.0).abs() < 0.01, "{mass}");
    }

    #[test]
    fn reference_constant_agrees_with_quadrature() {
        let nominal = duffing_position_integral(&DuffingParams::default(), 1.0);
        assert!(
            (nominal - DUFFING_REFERENCE_NORMALIZER).abs() / DUFFING_REFERENCE_NORMALIZER < 1e-5,
            "{nominal}"
        );
    }

    #[test]
    fn other_noise_levels_are_normalized() {
        let oracle = AnalyticOracle::duffing(DuffingParams::default(), 1.6).unwrap();
        let mass = integrate(&oracle, [-10.0, -12.0], [10.0, 12.0], 900);
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
    }
}
