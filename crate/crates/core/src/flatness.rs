//! Differential-flatness maps for the quadcopter and its feedback-linearized
//! reduction.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default gravitational acceleration (m/s²).
pub const GRAVITY: f64 = 9.81;

const SINGULAR_EPS: f64 = 1e-6;

/// Flat output and the derivatives needed to recover state and input.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlatSample {
    pub r: Vector3<f64>,
    pub r1: Vector3<f64>,
    pub r2: Vector3<f64>,
    pub r3: Vector3<f64>,
    pub psi: f64,
    pub psi1: f64,
}

/// Position, Z-Y-X Euler angles `(phi, theta, psi)` and velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadState {
    pub r: Vector3<f64>,
    pub xi: Vector3<f64>,
    pub r1: Vector3<f64>,
}

/// Mass-normalized thrust and body rates `(p, q, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadInput {
    pub thrust: f64,
    pub omega: Vector3<f64>,
}

/// Input of the reduced model: thrust and attitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedInput {
    pub thrust: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

fn z_w() -> Vector3<f64> {
    Vector3::z()
}

/// Body z-axis, third column of the Z-Y-X rotation matrix.
pub fn body_z(phi: f64, theta: f64, psi: f64) -> Vector3<f64> {
    let (sf, cf) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    Vector3::new(sf * sp + cf * st * cp, cf * st * sp - sf * cp, cf * ct)
}

/// Recovers full state and input from flat output derivatives.
pub fn flat_to_state_input(s: &FlatSample, g: f64) -> Result<(QuadState, QuadInput)> {
    let t_vec = Vector3::new(s.r2.x, s.r2.y, s.r2.z + g);
    let thrust = t_vec.norm();
    if thrust < SINGULAR_EPS {
        return Err(Error::SingularThrust(thrust));
    }
    let (sp, cp) = s.psi.sin_cos();
    let y_c = Vector3::new(-sp, cp, 0.0);
    let z_b = t_vec / thrust;
    let x_raw = y_c.cross(&z_b);
    let xn = x_raw.norm();
    if xn < SINGULAR_EPS {
        return Err(Error::SingularAttitude(xn));
    }
    let x_b = x_raw / xn;
    let y_b = z_b.cross(&x_b);
    let h_w = (s.r3 - z_b.dot(&s.r3) * z_b) / thrust;

    let zw = z_w();
    let theta = -(zw.dot(&x_b)).clamp(-1.0, 1.0).asin();
    let phi = (zw.dot(&y_b) / theta.cos()).clamp(-1.0, 1.0).asin();
    let p = -y_b.dot(&h_w);
    let q = x_b.dot(&h_w);
    let r = z_b.dot(&(s.psi1 * zw));

    Ok((
        QuadState { r: s.r, xi: Vector3::new(phi, theta, s.psi), r1: s.r1 },
        QuadInput { thrust, omega: Vector3::new(p, q, r) },
    ))
}

/// `Psi(v) = T z_B - g z_W`.
pub fn virtual_from_attitude(v: &ReducedInput, g: f64) -> Vector3<f64> {
    v.thrust * body_z(v.phi, v.theta, v.psi) - g * z_w()
}

/// Inverse of [`virtual_from_attitude`] for a known yaw.
///
/// Fails when `mu_3 + g <= 0`, i.e. the commanded acceleration would need the
/// vehicle to point its thrust downward.
pub fn attitude_from_virtual(mu: &Vector3<f64>, psi: f64, g: f64) -> Result<ReducedInput> {
    let up = mu.z + g;
    if !(up > 0.0) {
        return Err(Error::InvertedFlight(up));
    }
    let (sp, cp) = psi.sin_cos();
    let theta = ((mu.x * cp + mu.y * sp) / up).atan();
    let phi = ((mu.x * sp - mu.y * cp) * theta.cos() / up).atan();
    let thrust = (mu + g * z_w()).norm();
    Ok(ReducedInput { thrust, phi, theta, psi })
}

/// Membership in the angle cone `||cot(eps) (mu_1, mu_2)|| <= mu_3 + g`.
pub fn in_angle_cone(mu: &Vector3<f64>, eps: f64, g: f64) -> bool {
    angle_cone_margin(mu, eps, g) >= 0.0
}

/// Signed slack of the angle cone; nonnegative inside.
pub fn angle_cone_margin(mu: &Vector3<f64>, eps: f64, g: f64) -> f64 {
    mu.z + g - mu.x.hypot(mu.y) / eps.tan()
}

/// Tilt of the thrust vector from vertical; the worst case over yaw of
/// `max(|phi|, |theta|)` for this `mu`.
pub fn tilt_angle(mu: &Vector3<f64>, g: f64) -> f64 {
    mu.x.hypot(mu.y).atan2(mu.z + g)
}
