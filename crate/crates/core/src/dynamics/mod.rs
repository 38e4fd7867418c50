//! Dynamical models: static maps, deterministic flows and SDEs with
//! additive noise, plus the benchmark systems and their exact densities.

mod benchmarks;
mod frame;
mod ground_motion;
mod rk4;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use benchmarks::{
    duffing_model, linear_map_model, nonlinear_map_model, AnalyticOracle, DuffingDrift, DuffingParams, LinearMap,
    NonlinearMap, DUFFING_NOISE_INTENSITY, DUFFING_REFERENCE_NORMALIZER,
};
pub use frame::{bouc_wen_rate, BoucWenParams, FrameFlow, FrameOutput, FrameParams, DEFAULT_FLOOR_MASSES};
pub use ground_motion::{arias_window, synthetic_record, GroundMotionRecord, SYNTHETIC_SEED};
pub use rk4::{integrate_flow, rk4_trajectory, step_count, Rk4Workspace};

/// Right-hand side of `ẋ = f(t, x)`.
pub trait VectorField: Send + Sync {
    fn dimension(&self) -> usize;
    /// Writes `f(t, x)` into `out`.
    fn eval(&self, t: f64, x: &DVector<f64>, out: &mut DVector<f64>);
}

impl<T: VectorField + ?Sized> VectorField for Arc<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn eval(&self, t: f64, x: &DVector<f64>, out: &mut DVector<f64>) {
        (**self).eval(t, x, out)
    }
}

impl<T: VectorField + ?Sized> VectorField for &T {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn eval(&self, t: f64, x: &DVector<f64>, out: &mut DVector<f64>) {
        (**self).eval(t, x, out)
    }
}

/// A map `θ ↦ x`.
pub trait StaticMap: Send + Sync {
    fn input_dimension(&self) -> usize;
    fn output_dimension(&self) -> usize;
    fn apply(&self, input: &DVector<f64>) -> Result<DVector<f64>>;
}

/// A deterministic input-to-trajectory map: the input fixes the whole
/// trajectory, whose observable is reported at the requested times.
pub trait FlowMap: Send + Sync {
    fn input_dimension(&self) -> usize;
    fn output_dimension(&self) -> usize;
    fn start_time(&self) -> f64;
    fn trajectory(&self, input: &DVector<f64>, times: &[f64]) -> Result<Vec<DVector<f64>>>;
}

/// Closure-backed vector field.
pub struct FnField<F> {
    dimension: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(f64, &DVector<f64>, &mut DVector<f64>) + Send + Sync,
{
    pub fn new(dimension: usize, f: F) -> Self {
        FnField { dimension, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(f64, &DVector<f64>, &mut DVector<f64>) + Send + Sync,
{
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn eval(&self, t: f64, x: &DVector<f64>, out: &mut DVector<f64>) {
        (self.f)(t, x, out)
    }
}

/// `ẋ = J x`.
#[derive(Clone, Debug)]
pub struct LinearField {
    pub matrix: DMatrix<f64>,
}

impl LinearField {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        assert!(matrix.is_square(), "linear field needs a square matrix");
        LinearField { matrix }
    }
}

impl VectorField for LinearField {
    fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    fn eval(&self, _t: f64, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.gemv(1.0, &self.matrix, x, 0.0);
    }
}

/// Closure-backed static map.
pub struct FnMap<F> {
    input: usize,
    output: usize,
    f: F,
}

impl<F> FnMap<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    pub fn new(input: usize, output: usize, f: F) -> Self {
        FnMap { input, output, f }
    }
}

impl<F> StaticMap for FnMap<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn input_dimension(&self) -> usize {
        self.input
    }

    fn output_dimension(&self) -> usize {
        self.output
    }

    fn apply(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        Ok((self.f)(input))
    }
}

/// Flow of an ODE whose state is the input itself.
pub struct OdeFlow<F> {
    pub field: F,
    pub start_time: f64,
    pub step: f64,
}

impl<F: VectorField> OdeFlow<F> {
    pub fn new(field: F, start_time: f64, step: f64) -> Self {
        OdeFlow {
            field,
            start_time,
            step,
        }
    }
}

impl<F: VectorField> FlowMap for OdeFlow<F> {
    fn input_dimension(&self) -> usize {
        self.field.dimension()
    }

    fn output_dimension(&self) -> usize {
        self.field.dimension()
    }

    fn start_time(&self) -> f64 {
        self.start_time
    }

    fn trajectory(&self, input: &DVector<f64>, times: &[f64]) -> Result<Vec<DVector<f64>>> {
        rk4_trajectory(&self.field, input, self.start_time, times, self.step)
    }
}

/// `dX = G(X, t) dt + A dB` with `Cov(dB) = D dt` and constant `A`, `D`.
pub struct SdeModel {
    pub drift: Arc<dyn VectorField>,
    /// `n × m` noise loading `A`.
    pub diffusion: DMatrix<f64>,
    /// `m × m` noise intensity `D`.
    pub intensity: DMatrix<f64>,
}

impl SdeModel {
    pub fn new(drift: Arc<dyn VectorField>, diffusion: DMatrix<f64>, intensity: DMatrix<f64>) -> Result<Self> {
        let n = drift.dimension();
        if diffusion.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: diffusion.nrows(),
            });
        }
        if intensity.nrows() != diffusion.ncols() || !intensity.is_square() {
            return Err(Error::DimensionMismatch {
                expected: diffusion.ncols(),
                actual: intensity.nrows(),
            });
        }
        if intensity.symmetric_eigenvalues().iter().any(|&l| l < -1e-12) {
            return Err(Error::invalid(
                "intensity",
                "noise intensity must be positive semi-definite",
            ));
        }
        Ok(SdeModel {
            drift,
            diffusion,
            intensity,
        })
    }

    pub fn dimension(&self) -> usize {
        self.drift.dimension()
    }

    pub fn noise_dimension(&self) -> usize {
        self.diffusion.ncols()
    }
}

impl fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("dimension", &self.dimension())
            .field("diffusion", &self.diffusion)
            .field("intensity", &self.intensity)
            .finish()
    }
}

/// Any of the three model flavours.
#[derive(Clone)]
pub enum DynamicalModel {
    Static(Arc<dyn StaticMap>),
    Flow(Arc<dyn FlowMap>),
    Sde(Arc<SdeModel>),
}

impl DynamicalModel {
    pub fn input_dimension(&self) -> usize {
        match self {
            DynamicalModel::Static(m) => m.input_dimension(),
            DynamicalModel::Flow(m) => m.input_dimension(),
            DynamicalModel::Sde(m) => m.dimension(),
        }
    }

    pub fn state_dimension(&self) -> usize {
        match self {
            DynamicalModel::Static(m) => m.output_dimension(),
            DynamicalModel::Flow(m) => m.output_dimension(),
            DynamicalModel::Sde(m) => m.dimension(),
        }
    }
}

impl fmt::Debug for DynamicalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self {
            DynamicalModel::Static(_) => "Static",
            DynamicalModel::Flow(_) => "Flow",
            DynamicalModel::Sde(_) => "Sde",
        };
        write!(
            f,
            "DynamicalModel::{kind}({} -> {})",
            self.input_dimension(),
            self.state_dimension()
        )
    }
}
