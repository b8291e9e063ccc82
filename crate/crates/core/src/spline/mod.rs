//! Clamped uniform B-splines: knots, basis, derivative matrices, virtual
//! control points and the snap Gram matrix.

mod basis;
mod curve;
mod derivative;
mod gram;
mod knots;

pub use basis::basis_eval;
pub use curve::{SplineCurve, VirtualControlPoints};
pub use derivative::DerivativeMatrix;
pub use gram::{gauss_legendre, SnapGram};
pub use knots::KnotVector;
