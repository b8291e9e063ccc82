//! Quadcopter trajectory planning with continuous-time safety certificates.
//!
//! Trajectories are clamped uniform B-splines whose derivative bounds are
//! enforced through virtual control points inside a second-order cone
//! program. A CBF-QP filter keeps the closed loop inside a tube around the
//! plan, and a simulator/verifier re-checks every guarantee numerically.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conic;
pub mod error;
pub mod flatness;
pub mod planner;
pub mod scenario;
pub mod sim;
pub mod spline;
pub mod tracker;
pub mod verify;

pub use error::{Error, Result};
