use thiserror::Error;

/// Errors produced anywhere in the planning/tracking pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {t} outside knot range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("derivative order {order} exceeds spline degree {degree}")]
    OrderTooHigh { order: usize, degree: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Thrust vector vanishes (free fall), attitude undefined.
    #[error("singular thrust: |T| = {0:e}")]
    SingularThrust(f64),

    /// Body z axis parallel to the yaw heading axis.
    #[error("singular attitude: |y_C x z_B| = {0:e}")]
    SingularAttitude(f64),

    /// Commanded acceleration leaves the upright hemisphere (mu_z + g <= 0).
    #[error("inverted flight: mu_z + g = {0}")]
    InvertedFlight(f64),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("solver failure: {0}")]
    Solver(String),

    /// Tracking margins leave no headroom in a planning bound.
    #[error("infeasible margins: {0}")]
    InfeasibleMargins(String),

    /// Start state outside the region where the CBF filter is guaranteed.
    #[error("initial conditions rejected: {0}")]
    InitialConditions(String),

    #[error("scenario error: {0}")]
    Scenario(String),
}

pub type Result<T> = std::result::Result<T, Error>;
