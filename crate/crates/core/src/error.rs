use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input `{field}`: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("no good-lattice generating vector for n = {count}, q = {dimension}")]
    UnsupportedDimension { count: usize, dimension: usize },

    #[error("inverse CDF failed at quantile {quantile} (coordinate {coordinate})")]
    NumericalInversion { quantile: f64, coordinate: usize },

    #[error("covariance of component {component} is not positive definite")]
    NotPositiveDefinite { component: usize },

    #[error("map returned a non-finite value at cubature point {point:?}")]
    NonFinite { point: Vec<f64> },

    #[error("integration blew up at t = {time}")]
    IntegrationBlowup { time: f64 },

    #[error("component {component}: {source}")]
    Component {
        component: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn in_component(self, component: usize) -> Self {
        match self {
            Error::NotPositiveDefinite { .. } => Error::NotPositiveDefinite { component },
            other => Error::Component {
                component,
                source: Box::new(other),
            },
        }
    }

    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalInversion { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::NonFinite { .. }
            | Error::IntegrationBlowup { .. } => true,
            Error::Component { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
