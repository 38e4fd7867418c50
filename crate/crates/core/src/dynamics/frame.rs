use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{rk4_trajectory, FlowMap, GroundMotionRecord, VectorField};
use crate::error::{Error, Result};

/// Lumped floor masses in kg, ground floor first (tabulated in units of
/// 10⁵ kg).
pub const DEFAULT_FLOOR_MASSES: [f64; 10] = [0.5e5, 1.1e5, 1.1e5, 1.0e5, 1.0e5, 1.1e5, 1.3e5, 1.2e5, 1.2e5, 1.2e5];

/// Hysteresis law `ż = A ẋ − β |ẋ| |z|^{n−1} z − γ ẋ |z|^n` and the split
/// `R = α k x + (1 − α) k z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoucWenParams {
    pub alpha: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub beta: f64,
    pub gamma: f64,
    pub n: f64,
}

impl Default for BoucWenParams {
    fn default() -> Self {
        BoucWenParams {
            alpha: 0.01,
            a: 1.2,
            beta: 1.4,
            gamma: 0.2,
            n: 1.0,
        }
    }
}

/// `ż` for drift rate `xdot` and hysteretic variable `z`.
pub fn bouc_wen_rate(p: &BoucWenParams, xdot: f64, z: f64) -> f64 {
    let az = z.abs();
    let (pow_nm1, pow_n) = if p.n == 1.0 {
        (1.0, az)
    } else {
        (az.powf(p.n - 1.0), az.powf(p.n))
    };
    p.a * xdot - p.beta * xdot.abs() * pow_nm1 * z - p.gamma * xdot * pow_n
}

/// Geometry, masses and damping of the shear frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameParams {
    /// Floor masses in kg, ground floor first.
    pub masses: Vec<f64>,
    /// Story heights in m, ground story first.
    pub heights: Vec<f64>,
    /// Side of the square column section in m.
    pub column_side: f64,
    pub columns_per_story: usize,
    /// Mass-proportional Rayleigh coefficient.
    pub damping_mass: f64,
    /// Stiffness-proportional Rayleigh coefficient.
    pub damping_stiffness: f64,
    pub bouc_wen: BoucWenParams,
}

impl Default for FrameParams {
    fn default() -> Self {
        let mut heights = vec![3.0; 10];
        heights[0] = 4.0;
        FrameParams {
            masses: DEFAULT_FLOOR_MASSES.to_vec(),
            heights,
            column_side: 0.5,
            columns_per_story: 3,
            damping_mass: 0.01,
            damping_stiffness: 0.005,
            bouc_wen: BoucWenParams::default(),
        }
    }
}

impl FrameParams {
    pub fn stories(&self) -> usize {
        self.masses.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.masses.is_empty() || self.masses.len() != self.heights.len() {
            return Err(Error::invalid(
                "frame",
                "masses and heights must be non-empty and of equal length",
            ));
        }
        if self.masses.iter().chain(&self.heights).any(|v| !(*v > 0.0)) || !(self.column_side > 0.0) {
            return Err(Error::invalid(
                "frame",
                "masses, heights and column size must be positive",
            ));
        }
        Ok(())
    }

    /// Story stiffnesses `k_i = c · 12 E I / h_i³` with `I = s⁴/12` and `c`
    /// columns per story (fixed-fixed columns, rigid beams).
    pub fn story_stiffness(&self, youngs_modulus: f64) -> Vec<f64> {
        let inertia = self.column_side.powi(4) / 12.0;
        self.heights
            .iter()
            .map(|h| self.columns_per_story as f64 * 12.0 * youngs_modulus * inertia / h.powi(3))
            .collect()
    }

    /// Tridiagonal initial stiffness matrix.
    pub fn stiffness_matrix(&self, youngs_modulus: f64) -> DMatrix<f64> {
        let k = self.story_stiffness(youngs_modulus);
        let n = k.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] += k[i];
            if i + 1 < n {
                m[(i, i)] += k[i + 1];
                m[(i, i + 1)] -= k[i + 1];
                m[(i + 1, i)] -= k[i + 1];
            }
        }
        m
    }

    /// `C = a M + b K₀`.
    pub fn damping_matrix(&self, youngs_modulus: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(self.masses.clone())) * self.damping_mass
            + self.stiffness_matrix(youngs_modulus) * self.damping_stiffness
    }
}

/// Which part of the frame response a [`FrameFlow`] reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameOutput {
    TopDisplacement,
    #[default]
    TopDisplacementVelocity,
    /// Displacements, velocities and hysteretic variables, `3 × stories`.
    FullState,
}

/// Equations of motion for one realization of `(E, PGA)`.
struct FrameField<'a> {
    params: &'a FrameParams,
    stiffness: Vec<f64>,
    damping: DMatrix<f64>,
    record: &'a GroundMotionRecord,
    scale: f64,
}

impl VectorField for FrameField<'_> {
    fn dimension(&self) -> usize {
        3 * self.params.stories()
    }

    fn eval(&self, t: f64, x: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.params.stories();
        let bw = &self.params.bouc_wen;
        let ag = self.scale * self.record.acceleration_at(t);
        let (u, rest) = x.as_slice().split_at(n);
        let (v, z) = rest.split_at(n);
        let mut story_force = vec![0.0; n];
        for i in 0..n {
            let below_u = if i == 0 { 0.0 } else { u[i - 1] };
            let below_v = if i == 0 { 0.0 } else { v[i - 1] };
            let drift = u[i] - below_u;
            let drift_rate = v[i] - below_v;
            story_force[i] = bw.alpha * self.stiffness[i] * drift + (1.0 - bw.alpha) * self.stiffness[i] * z[i];
            out[2 * n + i] = bouc_wen_rate(bw, drift_rate, z[i]);
            out[i] = v[i];
        }
        for i in 0..n {
            let above = if i + 1 < n { story_force[i + 1] } else { 0.0 };
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            let damping: f64 = (lo..=hi).map(|j| self.damping[(i, j)] * v[j]).sum();
            out[n + i] = -(story_force[i] - above + damping) / self.params.masses[i] - ag;
        }
    }
}

/// Shear frame with Bouc–Wen stories under a scaled ground-motion record.
///
/// The input is `(E, PGA)`; the record is rescaled so its peak equals the
/// PGA. The structure starts at rest.
#[derive(Clone, Debug)]
pub struct FrameFlow {
    pub params: FrameParams,
    pub record: GroundMotionRecord,
    pub output: FrameOutput,
    pub step: f64,
}

impl FrameFlow {
    pub fn new(params: FrameParams, record: GroundMotionRecord, output: FrameOutput, step: f64) -> Result<Self> {
        params.validate()?;
        if !(step > 0.0) {
            return Err(Error::invalid("step", "must be positive"));
        }
        Ok(FrameFlow {
            params,
            record,
            output,
            step,
        })
    }

    /// Full 30-dimensional (for ten stories) state trajectory.
    pub fn state_trajectory(&self, youngs_modulus: f64, pga: f64, times: &[f64]) -> Result<Vec<DVector<f64>>> {
        if !(youngs_modulus > 0.0) {
            return Err(Error::invalid(
                "E",
                format!("Young's modulus must be positive, got {youngs_modulus}"),
            ));
        }
        let peak = self.record.pga();
        let field = FrameField {
            params: &self.params,
            stiffness: self.params.story_stiffness(youngs_modulus),
            damping: self.params.damping_matrix(youngs_modulus),
            record: &self.record,
            scale: if peak > 0.0 { pga / peak } else { 0.0 },
        };
        rk4_trajectory(&field, &DVector::zeros(field.dimension()), 0.0, times, self.step)
    }
}

impl FlowMap for FrameFlow {
    fn input_dimension(&self) -> usize {
        2
    }

    fn output_dimension(&self) -> usize {
        match self.output {
            FrameOutput::TopDisplacement => 1,
            FrameOutput::TopDisplacementVelocity => 2,
            FrameOutput::FullState => 3 * self.params.stories(),
        }
    }

    fn start_time(&self) -> f64 {
        0.0
    }

    fn trajectory(&self, input: &DVector<f64>, times: &[f64]) -> Result<Vec<DVector<f64>>> {
        if input.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                actual: input.len(),
            });
        }
        let n = self.params.stories();
        let states = self.state_trajectory(input[0], input[1], times)?;
        Ok(states
            .into_iter()
            .map(|s| match self.output {
                FrameOutput::TopDisplacement => DVector::from_element(1, s[n - 1]),
                FrameOutput::TopDisplacementVelocity => DVector::from_vec(vec![s[n - 1], s[2 * n - 1]]),
                FrameOutput::FullState => s,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{synthetic_record, SYNTHETIC_SEED};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bouc_wen_scalar_law() {
        let p = BoucWenParams::default();
        assert_relative_eq!(bouc_wen_rate(&p, 1.0, 0.0), 1.2, epsilon = 1e-15);
        assert!(bouc_wen_rate(&p, 1.0, 0.75).abs() < 1e-15);
        // integrate ż at constant ẋ = 1 towards the fixed point
        let mut z = 0.0;
        for _ in 0..20_000 {
            z += 1e-3 * bouc_wen_rate(&p, 1.0, z);
        }
        assert_relative_eq!(z, 0.75, epsilon = 1e-9);
    }

    #[test]
    fn restoring_force_is_linear_at_zero_z() {
        let params = FrameParams::default();
        let k = params.story_stiffness(3e10)[0];
        let alpha = params.bouc_wen.alpha;
        let r = |x: f64| alpha * k * x + (1.0 - alpha) * k * 0.0;
        assert_relative_eq!(r(2.0) / 2.0, 0.01 * k, epsilon = 1e-12);
    }

    #[test]
    fn stiffness_assembly() {
        let params = FrameParams::default();
        let k = params.story_stiffness(3e10);
        let inertia = 0.5f64.powi(4) / 12.0;
        assert_relative_eq!(k[0], 3.0 * 12.0 * 3e10 * inertia / 64.0, epsilon = 1e-6);
        assert_relative_eq!(k[5], 3.0 * 12.0 * 3e10 * inertia / 27.0, epsilon = 1e-6);
        let m = params.stiffness_matrix(3e10);
        assert_relative_eq!(m[(0, 0)], k[0] + k[1]);
        assert_relative_eq!(m[(9, 9)], k[9]);
        assert_eq!(params.masses[0], 0.5e5);
    }

    #[test]
    fn zero_record_keeps_the_frame_at_rest() {
        let record = GroundMotionRecord::new(0.02, vec![0.0; 101]).unwrap();
        let flow = FrameFlow::new(FrameParams::default(), record, FrameOutput::FullState, 0.005).unwrap();
        let states = flow.state_trajectory(3e10, 2.0, &[1.0, 2.0]).unwrap();
        assert!(states.iter().all(|s| s.len() == 30 && s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn response_is_bounded_and_hysteresis_stays_below_cap() {
        let flow = FrameFlow::new(
            FrameParams::default(),
            synthetic_record(SYNTHETIC_SEED),
            FrameOutput::FullState,
            0.005,
        )
        .unwrap();
        let times: Vec<f64> = (1..=100).map(|i| i as f64 * 0.2).collect();
        let states = flow.state_trajectory(3e10, 2.0, &times).unwrap();
        let cap = 1.2 / (1.4 - 0.2);
        for s in &states {
            assert!(s.rows(20, 10).iter().all(|z| z.abs() <= cap));
        }
        let top = states.iter().map(|s| s[9].abs()).fold(0.0, f64::max);
        assert!(top > 1e-4 && top < 1.0, "{top}");
    }

    #[test]
    fn hysteretic_variable_bounded_under_random_drift_rates() {
        let p = BoucWenParams::default();
        let cap = p.a / (p.beta - p.gamma);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let mut z: f64 = 0.0;
            let amplitude = rng.random_range(0.1..10.0);
            for _ in 0..5000 {
                let xdot = rng.random_range(-amplitude..amplitude);
                // RK4 on ż with ẋ held over the step
                let h = 1e-3;
                let k1 = bouc_wen_rate(&p, xdot, z);
                let k2 = bouc_wen_rate(&p, xdot, z + 0.5 * h * k1);
                let k3 = bouc_wen_rate(&p, xdot, z + 0.5 * h * k2);
                let k4 = bouc_wen_rate(&p, xdot, z + h * k3);
                z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                assert!(z.abs() <= cap);
            }
        }
    }
}
