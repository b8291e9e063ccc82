//! CBF-QP safety filter keeping the closed loop inside an axis-aligned tube
//! `||r - r_ref||_inf <= delta` around a reference trajectory.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flatness::{attitude_from_virtual, ReducedInput};

/// Tube half-width and the coefficients of `h'' + a1 h' + a2 h >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCbf", into = "RawCbf")]
pub struct CbfParams {
    pub delta: f64,
    pub a1: f64,
    pub a2: f64,
    /// magnitudes of the (negative real) roots of `s^2 + a1 s + a2`
    pub lambda1: f64,
    pub lambda2: f64,
}

#[derive(Serialize, Deserialize)]
struct RawCbf {
    delta: f64,
    a1: f64,
    a2: f64,
}

impl From<CbfParams> for RawCbf {
    fn from(p: CbfParams) -> Self {
        RawCbf { delta: p.delta, a1: p.a1, a2: p.a2 }
    }
}

impl TryFrom<RawCbf> for CbfParams {
    type Error = Error;
    fn try_from(r: RawCbf) -> Result<Self> {
        CbfParams::new(r.delta, r.a1, r.a2)
    }
}

impl CbfParams {
    pub fn new(delta: f64, a1: f64, a2: f64) -> Result<Self> {
        if !(delta > 0.0 && a1 > 0.0 && a2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tube parameters must be positive, got delta={delta}, a1={a1}, a2={a2}"
            )));
        }
        let disc = a1 * a1 - 4.0 * a2;
        if disc < 0.0 {
            return Err(Error::InvalidArgument(format!("a1^2 >= 4 a2 required for real roots, got a1={a1}, a2={a2}")));
        }
        // larger root by the stable formula, smaller from the product
        let lambda1 = 0.5 * (a1 + disc.sqrt());
        let lambda2 = a2 / lambda1;
        Ok(CbfParams { delta, a1, a2, lambda1, lambda2 })
    }

    /// Bound on the velocity error implied by staying in the tube.
    pub fn velocity_bound(&self) -> f64 {
        2.0 * self.delta * self.a2 / self.a1
    }

    /// Bound on the deviation of the filtered input from the reference
    /// acceleration.
    pub fn input_bound(&self) -> f64 {
        4.0 * self.delta * self.a2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub r: Vector3<f64>,
    pub r1: Vector3<f64>,
    pub r2: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

/// One filter constraint `phi1 . mu + phi2 <= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbfFace {
    pub axis: usize,
    pub side: Side,
    pub phi1: Vector3<f64>,
    pub phi2: f64,
}

impl CbfFace {
    pub fn residual(&self, mu: &Vector3<f64>) -> f64 {
        self.phi1.dot(mu) + self.phi2
    }

    pub fn label(&self) -> &'static str {
        FACE_LABELS[2 * self.axis + usize::from(self.side == Side::Lower)]
    }
}

/// Face order used throughout: x upper, x lower, y upper, y lower, z upper, z lower.
pub const FACE_LABELS: [&str; 6] = ["x-upper", "x-lower", "y-upper", "y-lower", "z-upper", "z-lower"];

pub fn cbf_faces(r: &Vector3<f64>, r1: &Vector3<f64>, rf: &ReferencePoint, p: &CbfParams) -> [CbfFace; 6] {
    let mut out = [CbfFace { axis: 0, side: Side::Upper, phi1: Vector3::zeros(), phi2: 0.0 }; 6];
    for q in 0..3 {
        let mut e = Vector3::zeros();
        e[q] = 1.0;
        let upper = -rf.r2[q] + p.a1 * (r1[q] - rf.r1[q]) + p.a2 * (r[q] - rf.r[q] - p.delta);
        let lower = rf.r2[q] + p.a1 * (rf.r1[q] - r1[q]) + p.a2 * (rf.r[q] - r[q] - p.delta);
        out[2 * q] = CbfFace { axis: q, side: Side::Upper, phi1: e, phi2: upper };
        out[2 * q + 1] = CbfFace { axis: q, side: Side::Lower, phi1: -e, phi2: lower };
    }
    out
}

/// Six barrier values `delta + q_ref - q`, `delta + q - q_ref` per axis.
pub fn barrier_values(r: &Vector3<f64>, r_ref: &Vector3<f64>, delta: f64) -> [f64; 6] {
    let mut h = [0.0; 6];
    for q in 0..3 {
        h[2 * q] = delta + r_ref[q] - r[q];
        h[2 * q + 1] = delta + r[q] - r_ref[q];
    }
    h
}

/// Minimizer of `||mu - mu_nom||^2` over the faces. The problem separates by
/// axis, so the answer is a per-axis clamp onto `[phi2_lower, -phi2_upper]`.
pub fn filter(mu_nom: &Vector3<f64>, faces: &[CbfFace; 6]) -> (Vector3<f64>, Vec<&'static str>) {
    let mut mu = *mu_nom;
    let mut active = Vec::new();
    for q in 0..3 {
        let hi = -faces[2 * q].phi2;
        let lo = faces[2 * q + 1].phi2;
        if mu[q] > hi {
            mu[q] = hi;
            active.push(faces[2 * q].label());
        } else if mu[q] < lo {
            mu[q] = lo;
            active.push(faces[2 * q + 1].label());
        }
    }
    (mu, active)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialReport {
    /// `||e||_inf <= delta`
    pub tube: bool,
    /// `||e' + lambda e||_inf <= lambda delta` for either root
    pub rate: bool,
    /// `||e'||_inf <= 2 delta a2 / a1`
    pub velocity: bool,
    pub position_error: f64,
    pub velocity_error: f64,
}

impl InitialReport {
    pub fn passed(&self) -> bool {
        self.tube && self.rate
    }
}

pub fn check_initial_conditions(
    r: &Vector3<f64>,
    r1: &Vector3<f64>,
    rf: &ReferencePoint,
    p: &CbfParams,
) -> InitialReport {
    let e = r - rf.r;
    let ed = r1 - rf.r1;
    let pos = e.amax();
    let rate = [p.lambda1, p.lambda2].iter().any(|&l| (ed + l * e).amax() <= l * p.delta);
    InitialReport {
        tube: pos <= p.delta,
        rate,
        velocity: ed.amax() <= p.velocity_bound(),
        position_error: pos,
        velocity_error: ed.amax(),
    }
}

/// Proportional-derivative tracking law with adjustable feedforward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalGains {
    pub kp: f64,
    pub kd: f64,
    /// weight on the reference acceleration
    pub kff: f64,
}

impl NominalGains {
    pub fn well_tuned() -> Self {
        NominalGains { kp: 16.0, kd: 8.0, kff: 1.0 }
    }

    /// Soft, lightly damped and without feedforward: drifts out of a
    /// 0.1 m tube on gentle references.
    pub fn detuned() -> Self {
        NominalGains { kp: 1.0, kd: 0.4, kff: 0.0 }
    }
}

pub fn nominal_mu(r: &Vector3<f64>, r1: &Vector3<f64>, rf: &ReferencePoint, k: &NominalGains) -> Vector3<f64> {
    k.kff * rf.r2 + k.kp * (rf.r - r) + k.kd * (rf.r1 - r1)
}

pub fn nominal_pd(
    r: &Vector3<f64>,
    r1: &Vector3<f64>,
    rf: &ReferencePoint,
    k: &NominalGains,
    psi: f64,
    g: f64,
) -> Result<ReducedInput> {
    attitude_from_virtual(&nominal_mu(r, r1, rf, k), psi, g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafeCommand {
    pub mu_star: Vector3<f64>,
    pub v_s: ReducedInput,
    pub barrier_values: [f64; 6],
    pub active_faces: Vec<&'static str>,
}

pub fn safe_step(
    r: &Vector3<f64>,
    r1: &Vector3<f64>,
    rf: &ReferencePoint,
    mu_nom: &Vector3<f64>,
    p: &CbfParams,
    psi: f64,
    g: f64,
) -> Result<SafeCommand> {
    let faces = cbf_faces(r, r1, rf, p);
    let (mu_star, active_faces) = filter(mu_nom, &faces);
    let v_s = attitude_from_virtual(&mu_star, psi, g)?;
    Ok(SafeCommand { mu_star, v_s, barrier_values: barrier_values(r, &rf.r, p.delta), active_faces })
}

/// One control tick as seen by the certificate checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub r: Vector3<f64>,
    pub r1: Vector3<f64>,
    pub reference: ReferencePoint,
    pub mu: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub max_position_error: f64,
    pub position_bound: f64,
    pub max_velocity_error: f64,
    pub velocity_bound: f64,
    pub max_input_deviation: f64,
    pub input_bound: f64,
    pub min_barrier: f64,
}

impl CertificateReport {
    /// All bounds hold with `slack` on the position/velocity/barrier checks;
    /// the input bound is structural and gets none.
    pub fn holds(&self, slack: f64) -> bool {
        self.max_position_error <= self.position_bound + slack
            && self.max_velocity_error <= self.velocity_bound + slack
            && self.max_input_deviation <= self.input_bound
            && self.min_barrier >= -slack
    }
}

pub fn certificates(trace: &[TickRecord], p: &CbfParams) -> CertificateReport {
    let mut rep = CertificateReport {
        max_position_error: 0.0,
        position_bound: p.delta,
        max_velocity_error: 0.0,
        velocity_bound: p.velocity_bound(),
        max_input_deviation: 0.0,
        input_bound: p.input_bound(),
        min_barrier: if trace.is_empty() { p.delta } else { f64::INFINITY },
    };
    for t in trace {
        rep.max_position_error = rep.max_position_error.max((t.r - t.reference.r).amax());
        rep.max_velocity_error = rep.max_velocity_error.max((t.r1 - t.reference.r1).amax());
        rep.max_input_deviation = rep.max_input_deviation.max((t.mu - t.reference.r2).amax());
        let h = barrier_values(&t.r, &t.reference.r, p.delta);
        rep.min_barrier = h.iter().copied().fold(rep.min_barrier, f64::min);
    }
    rep
}
