//! Simulation and certification of load-side primary frequency control.
//!
//! The crate integrates power-network swing dynamics in line-flow
//! coordinates, closed by distributed primal-dual load controllers, and
//! checks the resulting equilibria against an independent solver of the
//! underlying optimal load control problem.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod costs;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod netmodel;
pub mod oracle;
pub mod par;
pub mod scenario;
pub mod tolerances;
pub mod trajectory;
pub mod verify;

pub use error::{Error, ErrorClass, Result};
