//! Expectation-maximization for exponential-family latent-variable models,
//! written as mirror descent with the log-partition as mirror map.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod baseline;
pub mod error;
pub mod expfam;
pub mod models;
pub mod numeric;
pub mod solver;
pub mod synthetic;
pub mod tolerances;
pub mod verify;

pub use error::{Error, Result};
pub use expfam::{FamilySpec, MeanParams, NaturalParams};
pub use models::{Dataset, LatentModel, ModelKind, Responsibilities};
pub use tolerances::Tolerances;
