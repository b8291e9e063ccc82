//! Dense-sampling verification of planned trajectories.
//!
//! Margins come from evaluating the curve and pushing the samples through
//! the flat maps; nothing here reads planner internals. The worst sample of
//! each class is refined by a golden-section search between its neighbours.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::flatness::{angle_cone_margin, flat_to_state_input, FlatSample, QuadInput, QuadState};
use crate::planner::{ConvexSet, PlanningScenario, SafetyBounds, TrajectoryPlan, ZetaMode};
use crate::spline::SplineCurve;

pub const DEFAULT_SAMPLES_PER_SPAN: usize = 200;
/// Budget for open-loop plan checks.
pub const PLAN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub class: String,
    /// signed, in the constraint's units; negative means violated
    pub margin: f64,
    /// time of the worst case; absent for control-point certificates
    pub t: Option<f64>,
    pub samples: usize,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub margins: Vec<Margin>,
}

impl ConstraintReport {
    pub fn get(&self, class: &str) -> Option<&Margin> {
        self.margins.iter().find(|m| m.class == class)
    }

    pub fn worst(&self) -> Option<&Margin> {
        self.margins.iter().min_by(|a, b| a.margin.total_cmp(&b.margin))
    }

    pub fn violations(&self, tol: f64) -> Vec<&Margin> {
        self.margins.iter().filter(|m| !(m.margin >= -tol)).collect()
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.violations(tol).is_empty()
    }
}

/// Kinematics and flat-map image of one sample (yaw held at zero).
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub t: f64,
    pub r: Vector3<f64>,
    pub r1: Vector3<f64>,
    pub r2: Vector3<f64>,
    pub r3: Vector3<f64>,
    pub flat: Option<(QuadState, QuadInput)>,
}

fn v3(v: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

pub fn kinematics(curve: &SplineCurve, t: f64, g: f64) -> Result<Kinematics> {
    let d = curve.eval_upto(3, t)?;
    let (r, r1, r2, r3) = (v3(&d[0]), v3(&d[1]), v3(&d[2]), v3(&d[3]));
    let flat = flat_to_state_input(&FlatSample { r, r1, r2, r3, psi: 0.0, psi1: 0.0 }, g).ok();
    Ok(Kinematics { t, r, r1, r2, r3, flat })
}

/// Sample times: `per_span` points on every nonempty span, both ends
/// included.
pub fn sample_times(curve: &SplineCurve, per_span: usize) -> Vec<f64> {
    let k = curve.knots();
    let per_span = per_span.max(2);
    let mut ts = Vec::new();
    for l in k.spans() {
        let (a, b) = k.span_bounds(l);
        let first = if ts.is_empty() { 0 } else { 1 };
        for i in first..per_span {
            ts.push(a + (b - a) * i as f64 / (per_span - 1) as f64);
        }
    }
    ts
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Minimum of `f` over sorted `ts`, refined around the worst sample.
fn worst_over(ts: &[f64], f: &dyn Fn(f64) -> f64) -> (f64, f64) {
    let vals: Vec<f64> = ts.iter().map(|&t| f(t)).collect();
    let (k, &v0) = vals.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("no samples");
    if ts.len() < 3 || !v0.is_finite() {
        return (v0, ts[k]);
    }
    let mut a = ts[k.saturating_sub(1)];
    let mut b = ts[(k + 1).min(ts.len() - 1)];
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - gr * (b - a);
    let mut e = a + gr * (b - a);
    let (mut fc, mut fe) = (f(c), f(e));
    for _ in 0..80 {
        if fc < fe {
            b = e;
            e = c;
            fe = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + gr * (b - a);
            fe = f(e);
        }
        if b - a < 1e-12 * (1.0 + b.abs()) {
            break;
        }
    }
    let (tr, vr) = if fc < fe { (c, fc) } else { (e, fe) };
    if vr < v0 {
        (vr, tr)
    } else {
        (v0, ts[k])
    }
}

struct Collector<'a> {
    curve: &'a SplineCurve,
    g: f64,
    out: Vec<Margin>,
}

impl Collector<'_> {
    fn sampled(&mut self, class: String, unit: &str, ts: &[f64], f: impl Fn(&Kinematics) -> f64) {
        let eval = |t: f64| match kinematics(self.curve, t, self.g) {
            Ok(k) => f(&k),
            Err(_) => f64::NEG_INFINITY,
        };
        let (m, t) = worst_over(ts, &eval);
        self.out.push(Margin { class, margin: m, t: Some(t), samples: ts.len(), unit: unit.into() });
    }

    fn point(&mut self, class: String, unit: &str, t: f64, margin: f64) {
        self.out.push(Margin { class, margin, t: Some(t), samples: 1, unit: unit.into() });
    }

    fn certificate(&mut self, class: String, unit: &str, margins: impl Iterator<Item = f64>) {
        let mut n = 0;
        let mut m = f64::INFINITY;
        for v in margins {
            n += 1;
            m = m.min(v);
        }
        if n > 0 {
            self.out.push(Margin { class, margin: m, t: None, samples: n, unit: unit.into() });
        }
    }
}

fn flat_or<F: Fn(&QuadState, &QuadInput) -> f64>(k: &Kinematics, f: F) -> f64 {
    k.flat.as_ref().map_or(f64::NEG_INFINITY, |(s, u)| f(s, u))
}

fn set_margin(set: &ConvexSet, p: &DVector<f64>) -> f64 {
    set.margin(&v3(p))
}

/// Checks every constraint of `scenario` on the plan, against the bounds the
/// planner enforced (after any tracking margins).
pub fn verify_plan(
    plan: &TrajectoryPlan,
    scenario: &PlanningScenario,
    samples_per_span: usize,
) -> Result<ConstraintReport> {
    let curve = &plan.curve;
    let g = scenario.gravity;
    let bounds: SafetyBounds = scenario.effective_bounds()?;
    let knots = curve.knots();
    let d = knots.degree();
    let n = knots.n();
    let ts = sample_times(curve, samples_per_span);
    let mut c = Collector { curve, g, out: Vec::new() };

    // continuous-time checks
    if let Some(v) = bounds.v_max {
        c.sampled("speed".into(), "m/s", &ts, |k| v - k.r1.norm());
    }
    if let Some(eps) = bounds.eps {
        c.sampled("roll".into(), "rad", &ts, |k| flat_or(k, |s, _| eps - s.xi.x.abs()));
        c.sampled("pitch".into(), "rad", &ts, |k| flat_or(k, |s, _| eps - s.xi.y.abs()));
        let off = bounds.cone_offset;
        c.sampled("angle-cone".into(), "m/s^2", &ts, |k| angle_cone_margin(&k.r2, eps, g) - off);
    }
    if let Some(t) = bounds.t_max {
        c.sampled("thrust-max".into(), "m/s^2", &ts, |k| flat_or(k, |_, u| t - u.thrust));
    }
    if let Some(t) = bounds.t_min {
        c.sampled("thrust-min".into(), "m/s^2", &ts, |k| flat_or(k, |_, u| u.thrust - t));
    }
    if let Some(w) = bounds.omega_max {
        c.sampled("rate-p".into(), "rad/s", &ts, |k| flat_or(k, |_, u| w - u.omega.x.abs()));
        c.sampled("rate-q".into(), "rad/s", &ts, |k| flat_or(k, |_, u| w - u.omega.y.abs()));
    }
    for (i, cone) in bounds.position_cones.iter().enumerate() {
        c.sampled(format!("position[{i}]"), "m", &ts, |k| cone.margin(&k.r));
    }
    for (i, wp) in scenario.waypoints.iter().enumerate() {
        let r = v3(&curve.eval(0, wp.t)?);
        c.point(format!("waypoint[{i}]"), "m", wp.t, wp.radius - (r - wp.p).norm());
    }
    for (label, t, pins) in
        [("initial", knots.start(), &scenario.pins.initial), ("final", knots.end(), &scenario.pins.final_)]
    {
        for (r, p) in pins.iter().enumerate() {
            let v = v3(&curve.eval(r, t)?);
            c.point(format!("pin-{label}[{r}]"), "m/s^r", t, -(v - p).norm());
        }
    }
    if let Some(cor) = &scenario.corridor {
        if cor.sets.len() + d == n + 1 {
            for (l, set) in cor.sets.iter().enumerate() {
                let (a, b) = knots.span_bounds(l + d);
                let seg = linspace(a, b, samples_per_span);
                c.sampled(format!("corridor[{l}:{}]", set.name), "m", &seg, |k| set.margin(&k.r));
            }
        } else {
            c.certificate("corridor-size".into(), "-", std::iter::once(f64::NEG_INFINITY));
        }
    }
    for (i, ic) in scenario.intervals.iter().enumerate() {
        let spans = ((ic.t2 - ic.t1) / knots.spacing()).ceil().max(1.0) as usize;
        let win = linspace(ic.t1, ic.t2, samples_per_span * spans);
        match &ic.kind {
            crate::planner::IntervalKind::PositionInSet { set } => {
                c.sampled(format!("interval[{i}]-position"), "m", &win, |k| set.margin(&k.r))
            }
            crate::planner::IntervalKind::SpeedBound { v_max } => {
                c.sampled(format!("interval[{i}]-speed"), "m/s", &win, |k| v_max - k.r1.norm())
            }
        }
    }

    // control-point certificates
    let p0 = curve.vcps(0)?;
    let p1 = curve.vcps(1)?;
    let p2 = curve.vcps(2)?;
    let p3 = curve.vcps(3)?;
    let ez = Vector3::z();
    if let Some(v) = bounds.v_max {
        c.certificate("vcp-speed".into(), "m/s", (1..=n).map(|j| v - p1.column(j).norm()));
    }
    if let Some(eps) = bounds.eps {
        let off = bounds.cone_offset;
        c.certificate(
            "vcp-angle-cone".into(),
            "m/s^2",
            (2..=n).map(|j| angle_cone_margin(&v3(&p2.column(j)), eps, g) - off),
        );
    }
    if let Some(t) = bounds.t_max {
        c.certificate("vcp-thrust-max".into(), "m/s^2", (2..=n).map(|j| t - (v3(&p2.column(j)) + g * ez).norm()));
    }
    if let Some(t) = bounds.t_min {
        c.certificate("vcp-thrust-min".into(), "m/s^2", (2..=n).map(|j| p2.column(j)[2] + g - t));
    }
    if let Some(w) = bounds.omega_max {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for l in d..=n {
            let Some(z) = plan.zeta_for_span(l) else { continue };
            let (acc, jerk) = match plan.zeta_mode {
                ZetaMode::Vector => (l + 2 - d..=l, l + 3 - d..=l),
                ZetaMode::Scalar => (2..=n, 3..=n),
            };
            lo.extend(acc.map(|j| p2.column(j)[2] + g - z));
            hi.extend(jerk.map(|j| w * z - p3.column(j).norm()));
        }
        c.certificate("vcp-rate-thrust".into(), "m/s^2", lo.into_iter());
        c.certificate("vcp-rate-jerk".into(), "m/s^3", hi.into_iter());
    }
    for (i, cone) in bounds.position_cones.iter().enumerate() {
        c.certificate(format!("vcp-position[{i}]"), "m", (0..=n).map(|j| cone.margin(&v3(&p0.column(j)))));
    }
    if let Some(cor) = &scenario.corridor {
        if cor.sets.len() + d == n + 1 {
            let margins = cor.sets.iter().enumerate().flat_map(|(l, set)| (l..=l + d).map(move |j| (set, j)));
            c.certificate("vcp-corridor".into(), "m", margins.map(|(set, j)| set_margin(set, &p0.column(j))));
        }
    }
    Ok(ConstraintReport { margins: c.out })
}

/// Per-span check that `zeta` lower-bounds the thrust and scales the jerk
/// bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanMinimum {
    pub span: usize,
    pub zeta: f64,
    pub min_thrust: f64,
    pub max_jerk: f64,
    /// `min_thrust - zeta`
    pub thrust_margin: f64,
    /// `omega_max * zeta - max_jerk`
    pub jerk_margin: f64,
}

pub fn verify_span_minima(
    plan: &TrajectoryPlan,
    omega_max: f64,
    g: f64,
    samples_per_span: usize,
) -> Result<Vec<SpanMinimum>> {
    let curve = &plan.curve;
    let knots = curve.knots();
    let mut out = Vec::new();
    for l in knots.spans() {
        let Some(zeta) = plan.zeta_for_span(l) else { continue };
        let (a, b) = knots.span_bounds(l);
        let ts = linspace(a, b, samples_per_span);
        let thrust = |t: f64| match kinematics(curve, t, g) {
            Ok(k) => (k.r2 + g * Vector3::z()).norm(),
            Err(_) => f64::NEG_INFINITY,
        };
        let neg_jerk = |t: f64| curve.eval(3, t).map_or(f64::NEG_INFINITY, |j| -j.norm());
        let (min_thrust, _) = worst_over(&ts, &thrust);
        let (nj, _) = worst_over(&ts, &neg_jerk);
        out.push(SpanMinimum {
            span: l,
            zeta,
            min_thrust,
            max_jerk: -nj,
            thrust_margin: min_thrust - zeta,
            jerk_margin: omega_max * zeta + nj,
        });
    }
    Ok(out)
}
