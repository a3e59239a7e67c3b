#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Critical-threshold analysis for the damped one-dimensional Euler–Poisson
//! system and its nonlocal aggregation specialisation.

pub mod aggregation;
pub mod characteristic;
pub mod curves;
pub mod error;
pub mod explicit;
pub mod grid;
pub mod model;
pub mod ode;
pub mod verify;

pub use error::{CtError, Result};
pub use model::{
    from_rs, regime, to_rs, DampingRegime, Diagnostics, EPParams, Outcome, RegimeTag, RhoD, Rs,
    Verdict, DEFAULT_BOUNDARY_TOL,
};
