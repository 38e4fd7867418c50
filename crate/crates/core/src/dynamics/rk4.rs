use nalgebra::DVector;

use super::VectorField;
use crate::error::{Error, Result};

/// Relative tolerance when checking that an interval is a whole number of
/// steps.
const DIVISIBILITY_TOLERANCE: f64 = 1e-9;

/// Number of fixed steps of size `step` in `[t0, t1]`, if it is whole.
pub fn step_count(t0: f64, t1: f64, step: f64) -> Result<usize> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("step", format!("must be positive, got {step}")));
    }
    if !(t1 >= t0) {
        return Err(Error::invalid(
            "times",
            format!("end time {t1} precedes start time {t0}"),
        ));
    }
    let n = (t1 - t0) / step;
    let rounded = n.round();
    if (n - rounded).abs() > DIVISIBILITY_TOLERANCE * rounded.max(1.0) {
        return Err(Error::invalid(
            "step",
            format!("step {step} does not divide the interval [{t0}, {t1}]"),
        ));
    }
    Ok(rounded as usize)
}

/// Reusable stage buffers for classical fourth-order Runge–Kutta.
pub struct Rk4Workspace {
    k1: DVector<f64>,
    k2: DVector<f64>,
    k3: DVector<f64>,
    k4: DVector<f64>,
    tmp: DVector<f64>,
}

impl Rk4Workspace {
    pub fn new(n: usize) -> Self {
        Rk4Workspace {
            k1: DVector::zeros(n),
            k2: DVector::zeros(n),
            k3: DVector::zeros(n),
            k4: DVector::zeros(n),
            tmp: DVector::zeros(n),
        }
    }

    /// One step from `t` to `t + h`, in place.
    pub fn step<F: VectorField + ?Sized>(&mut self, field: &F, t: f64, h: f64, x: &mut DVector<f64>) {
        field.eval(t, x, &mut self.k1);
        self.tmp.copy_from(x);
        self.tmp.axpy(0.5 * h, &self.k1, 1.0);
        field.eval(t + 0.5 * h, &self.tmp, &mut self.k2);
        self.tmp.copy_from(x);
        self.tmp.axpy(0.5 * h, &self.k2, 1.0);
        field.eval(t + 0.5 * h, &self.tmp, &mut self.k3);
        self.tmp.copy_from(x);
        self.tmp.axpy(h, &self.k3, 1.0);
        field.eval(t + h, &self.tmp, &mut self.k4);
        let w = h / 6.0;
        x.axpy(w, &self.k1, 1.0);
        x.axpy(2.0 * w, &self.k2, 1.0);
        x.axpy(2.0 * w, &self.k3, 1.0);
        x.axpy(w, &self.k4, 1.0);
    }
}

fn check(x: &DVector<f64>, t: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::IntegrationBlowup { time: t })
    }
}

/// Integrates `ẋ = f(t, x)` from `t0` to `t1` with fixed RK4 steps. The step
/// must divide `t1 − t0`.
pub fn integrate_flow<F: VectorField + ?Sized>(
    field: &F,
    state: &DVector<f64>,
    t0: f64,
    t1: f64,
    step: f64,
) -> Result<DVector<f64>> {
    if !(t1 > t0) {
        return Err(Error::invalid("times", format!("need t1 > t0, got [{t0}, {t1}]")));
    }
    Ok(rk4_trajectory(field, state, t0, &[t1], step)?
        .pop()
        .expect("one output time"))
}

/// States at each of `times` (non-decreasing, all `≥ t0`). Every gap must be
/// a whole number of steps.
pub fn rk4_trajectory<F: VectorField + ?Sized>(
    field: &F,
    state: &DVector<f64>,
    t0: f64,
    times: &[f64],
    step: f64,
) -> Result<Vec<DVector<f64>>> {
    if state.len() != field.dimension() {
        return Err(Error::DimensionMismatch {
            expected: field.dimension(),
            actual: state.len(),
        });
    }
    check(state, t0)?;
    let mut ws = Rk4Workspace::new(state.len());
    let mut x = state.clone();
    let mut out = Vec::with_capacity(times.len());
    let mut t_prev = t0;
    let mut steps_done: usize = 0;
    for &t in times {
        let n = step_count(t_prev, t, step)?;
        for _ in 0..n {
            let t_now = t0 + steps_done as f64 * step;
            ws.step(field, t_now, step, &mut x);
            steps_done += 1;
            check(&x, t0 + steps_done as f64 * step)?;
        }
        out.push(x.clone());
        t_prev = t;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{FnField, LinearField};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exponential() -> FnField<impl Fn(f64, &DVector<f64>, &mut DVector<f64>) + Send + Sync> {
        FnField::new(1, |_, x: &DVector<f64>, out: &mut DVector<f64>| out.copy_from(x))
    }

    #[test]
    fn zero_field_keeps_state() {
        let f = LinearField::new(DMatrix::zeros(3, 3));
        let x0 = DVector::from_vec(vec![1.0, -2.0, 3.5]);
        assert_eq!(integrate_flow(&f, &x0, 0.0, 2.0, 0.01).unwrap(), x0);
    }

    #[test]
    fn exponential_growth() {
        let x = integrate_flow(&exponential(), &DVector::from_element(1, 1.0), 0.0, 1.0, 1e-3).unwrap();
        assert!((x[0] - std::f64::consts::E).abs() < 1e-9);
    }

    #[test]
    fn fourth_order_convergence() {
        let errors: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&h| {
                (integrate_flow(&exponential(), &DVector::from_element(1, 1.0), 0.0, 1.0, h).unwrap()[0] - 1f64.exp())
                    .abs()
            })
            .collect();
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!((4.0..=64.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn linear_system_matches_matrix_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let j = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
            let x0 = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let exact = (&j * 0.5).exp() * &x0;
            let x = integrate_flow(&LinearField::new(j), &x0, 0.0, 0.5, 1e-3).unwrap();
            assert!((x - exact).amax() < 1e-8);
        }
    }

    #[test]
    fn indivisible_step_is_rejected() {
        assert!(integrate_flow(&exponential(), &DVector::from_element(1, 1.0), 0.0, 1.0, 0.3).is_err());
        assert_eq!(step_count(0.0, 0.015, 0.005).unwrap(), 3);
    }

    #[test]
    fn blowup_reports_time() {
        let f = FnField::new(1, |_, x: &DVector<f64>, out: &mut DVector<f64>| out[0] = x[0] * x[0]);
        let err = integrate_flow(&f, &DVector::from_element(1, 1.0), 0.0, 5.0, 0.01).unwrap_err();
        assert!(matches!(err, Error::IntegrationBlowup { time } if time > 0.9 && time <= 5.0));
    }
}
