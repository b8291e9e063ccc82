//! Closed-loop simulation of the feedback-linearized double integrator
//! `r'' = mu` under a sampled-data tracking controller.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flatness::attitude_from_virtual;
use crate::spline::SplineCurve;
use crate::tracker::{
    barrier_values, check_initial_conditions, nominal_mu, safe_step, CbfParams, NominalGains, ReferencePoint,
    TickRecord,
};

pub trait Reference {
    fn sample(&self, t: f64) -> Result<ReferencePoint>;
}

/// Beyond the knot range the reference holds its end state.
impl Reference for SplineCurve {
    fn sample(&self, t: f64) -> Result<ReferencePoint> {
        let k = self.knots();
        let tc = t.clamp(k.start(), k.end());
        let d = self.eval_upto(2, tc)?;
        let v = |i: usize| Vector3::new(d[i][0], d[i][1], d[i][2]);
        if t > k.end() || t < k.start() {
            return Ok(ReferencePoint { r: v(0), r1: Vector3::zeros(), r2: Vector3::zeros() });
        }
        Ok(ReferencePoint { r: v(0), r1: v(1), r2: v(2) })
    }
}

/// Constant-acceleration reference, handy for closed-form checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parabola {
    pub r0: Vector3<f64>,
    pub v0: Vector3<f64>,
    pub a: Vector3<f64>,
}

impl Reference for Parabola {
    fn sample(&self, t: f64) -> Result<ReferencePoint> {
        Ok(ReferencePoint { r: self.r0 + self.v0 * t + 0.5 * self.a * t * t, r1: self.v0 + self.a * t, r2: self.a })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Hz
    pub control_rate: f64,
    pub substeps: usize,
    /// s
    pub duration: f64,
    pub initial_r: Vector3<f64>,
    pub initial_r1: Vector3<f64>,
}

impl SimConfig {
    pub fn new(duration: f64, initial_r: Vector3<f64>, initial_r1: Vector3<f64>) -> Self {
        SimConfig { control_rate: 100.0, substeps: 10, duration, initial_r, initial_r1 }
    }

    pub fn step(&self) -> f64 {
        1.0 / (self.control_rate * self.substeps as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    pub gains: NominalGains,
    pub cbf: CbfParams,
    pub filter: bool,
    pub psi: f64,
    pub gravity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub t: f64,
    pub r: Vector3<f64>,
    pub r1: Vector3<f64>,
    pub reference: ReferencePoint,
    pub mu_nom: Vector3<f64>,
    pub mu: Vector3<f64>,
    pub thrust: f64,
    pub phi: f64,
    pub theta: f64,
    pub barrier: [f64; 6],
    pub active: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimTrace {
    pub records: Vec<SimRecord>,
    /// smallest barrier value over all integration substeps
    pub min_barrier: f64,
    /// largest `||r - r_ref||_inf` over all integration substeps
    pub max_position_error: f64,
}

impl SimTrace {
    pub fn ticks(&self) -> Vec<TickRecord> {
        self.records.iter().map(|s| TickRecord { r: s.r, r1: s.r1, reference: s.reference, mu: s.mu }).collect()
    }
}

/// One classical RK4 step of `z' = (r1, mu)` with `mu` held.
pub fn rk4_step(r: &Vector3<f64>, r1: &Vector3<f64>, mu: &Vector3<f64>, h: f64) -> (Vector3<f64>, Vector3<f64>) {
    let f = |_r: &Vector3<f64>, v: &Vector3<f64>| (*v, *mu);
    let (k1r, k1v) = f(r, r1);
    let (k2r, k2v) = f(&(r + 0.5 * h * k1r), &(r1 + 0.5 * h * k1v));
    let (k3r, k3v) = f(&(r + 0.5 * h * k2r), &(r1 + 0.5 * h * k2v));
    let (k4r, k4v) = f(&(r + h * k3r), &(r1 + h * k3v));
    (r + h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r), r1 + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v))
}

pub fn simulate(reference: &dyn Reference, ctrl: &Controller, cfg: &SimConfig) -> Result<SimTrace> {
    if !(cfg.control_rate > 0.0 && cfg.substeps > 0 && cfg.duration >= 0.0) {
        return Err(Error::InvalidArgument("control rate, substeps and duration must be positive".into()));
    }
    let dt = 1.0 / cfg.control_rate;
    let h = cfg.step();
    let ticks = (cfg.duration * cfg.control_rate).round() as usize;
    let (mut r, mut r1) = (cfg.initial_r, cfg.initial_r1);
    let p = &ctrl.cbf;

    if ctrl.filter {
        let rf = reference.sample(0.0)?;
        let rep = check_initial_conditions(&r, &r1, &rf, p);
        if !rep.passed() {
            return Err(Error::InitialConditions(format!(
                "position error {:.4} (tube {}), rate condition {}",
                rep.position_error, p.delta, rep.rate
            )));
        }
    }

    let mut trace =
        SimTrace { records: Vec::with_capacity(ticks + 1), min_barrier: f64::INFINITY, max_position_error: 0.0 };
    let observe = |trace: &mut SimTrace, r: &Vector3<f64>, r_ref: &Vector3<f64>| {
        let b = barrier_values(r, r_ref, p.delta);
        trace.min_barrier = b.iter().copied().fold(trace.min_barrier, f64::min);
        trace.max_position_error = trace.max_position_error.max((r - r_ref).amax());
    };

    for k in 0..=ticks {
        let t = k as f64 * dt;
        let rf = reference.sample(t)?;
        observe(&mut trace, &r, &rf.r);
        let mu_nom = nominal_mu(&r, &r1, &rf, &ctrl.gains);
        let (mu, v, active) = if ctrl.filter {
            let cmd = safe_step(&r, &r1, &rf, &mu_nom, p, ctrl.psi, ctrl.gravity)?;
            (cmd.mu_star, cmd.v_s, cmd.active_faces.iter().map(|s| s.to_string()).collect())
        } else {
            (mu_nom, attitude_from_virtual(&mu_nom, ctrl.psi, ctrl.gravity)?, Vec::new())
        };
        trace.records.push(SimRecord {
            t,
            r,
            r1,
            reference: rf,
            mu_nom,
            mu,
            thrust: v.thrust,
            phi: v.phi,
            theta: v.theta,
            barrier: barrier_values(&r, &rf.r, p.delta),
            active,
        });
        if k == ticks {
            break;
        }
        for s in 1..=cfg.substeps {
            (r, r1) = rk4_step(&r, &r1, &mu, h);
            let ts = t + s as f64 * h;
            observe(&mut trace, &r, &reference.sample(ts)?.r);
        }
    }
    Ok(trace)
}
