//! Random dynamical systems on the cylinder `S¹ × ℝ^d`.
//!
//! The crate simulates cocycles driven by Wiener noise and forced periodically
//! in time, estimates Lyapunov exponents and semiuniform growth bounds,
//! approximates random invariant compact sets by pullback, and splits them
//! into random periodic curves with their winding numbers.
//!
//! Start with [`models::model_zoo`] for ready-made systems, then see the
//! `examples/` directory of the crate for one runnable walkthrough per
//! capability.

// `!(x > 0.0)` style guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attractor;
pub mod base;
pub mod cluster;
pub mod cocycle;
pub mod curves;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod lyapunov;
pub mod models;
pub mod permutation;
pub mod sde;
pub mod stats;

pub use base::{BaseFlow, NoisePath};
pub use cocycle::{CocycleSystem, CylinderState};
pub use error::{Error, Result};
