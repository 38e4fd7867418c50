#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cubature;
pub mod distribution;
pub mod dynamics;
pub mod error;
pub mod evolution;
pub mod experiment;
pub mod linalg;
pub mod mixture;
pub mod rep_points;

pub use distribution::{DistributionSpec, Marginal};
pub use error::{Error, Result};
