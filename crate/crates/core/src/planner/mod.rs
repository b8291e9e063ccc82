//! Compilation of continuous-time safety specifications into cone
//! constraints on B-spline control points, and the planning problem that
//! minimizes snap subject to them.

mod compile;
mod sets;

use std::time::Instant;

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::conic::{ConeProgram, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::flatness::GRAVITY;
use crate::spline::{KnotVector, SplineCurve};
use crate::tracker::CbfParams;

pub use compile::{reweight_snap, IntervalEmission, Layout, ProblemBuilder};
pub use sets::{ConvexSet, SocSet};

/// Bounds enforced over the whole trajectory. Absent entries are not
/// constrained.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SafetyBounds {
    pub v_max: Option<f64>,
    /// bound on roll and pitch (rad)
    pub eps: Option<f64>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    /// bound on the body rates `p`, `q` (rad/s)
    pub omega_max: Option<f64>,
    pub position_cones: Vec<SocSet>,
    /// tightening of the angle cone right-hand side (m/s²), from tracking
    /// margins
    #[serde(default)]
    pub cone_offset: f64,
}

impl SafetyBounds {
    pub fn validate(&self, g: f64) -> Result<()> {
        if let Some(v) = self.v_max {
            if !(v >= 0.0) {
                return Err(Error::InvalidArgument(format!("speed bound must be >= 0, got {v}")));
            }
        }
        if let Some(e) = self.eps {
            if !(e > 0.0 && e < std::f64::consts::FRAC_PI_2) {
                return Err(Error::InvalidArgument(format!("angle bound must lie in (0, pi/2), got {e}")));
            }
        }
        if let Some(t) = self.t_min {
            if !(t >= 0.0 && t <= g) {
                return Err(Error::InvalidArgument(format!("need 0 <= T_min <= g, got T_min = {t}")));
            }
        }
        if let Some(t) = self.t_max {
            if !(t >= g) {
                return Err(Error::InvalidArgument(format!("need T_max >= g, got T_max = {t}")));
            }
        }
        if let Some(w) = self.omega_max {
            if !(w >= 0.0) {
                return Err(Error::InvalidArgument(format!("rate bound must be >= 0, got {w}")));
            }
        }
        if !(self.cone_offset >= 0.0 && self.cone_offset < g) {
            return Err(Error::InvalidArgument(format!("cone offset must lie in [0, g), got {}", self.cone_offset)));
        }
        Ok(())
    }
}

/// Bounds shrunk so that a tracker running the CBF filter with `cbf` keeps
/// the realized thrust and attitude inside the original ones.
pub fn compile_tracking_margins(bounds: &SafetyBounds, cbf: &CbfParams, g: f64) -> Result<SafetyBounds> {
    let shift = 4.0 * cbf.delta * cbf.a2;
    let mut out = bounds.clone();
    if let Some(t) = bounds.t_max {
        let shrunk = t - 3f64.sqrt() * shift;
        if shrunk < g {
            return Err(Error::InfeasibleMargins(format!(
                "thrust: T_max - 4 sqrt(3) delta a2 = {shrunk:.4} is below g = {g}"
            )));
        }
        if let Some(tmin) = bounds.t_min {
            if shrunk < tmin {
                return Err(Error::InfeasibleMargins(format!(
                    "thrust: shrunk T_max = {shrunk:.4} is below T_min = {tmin}"
                )));
            }
        }
        out.t_max = Some(shrunk);
    }
    if let Some(eps) = bounds.eps {
        let offset = bounds.cone_offset + shift * (1.0 + 2f64.sqrt() * (1.0 / eps.tan()).abs());
        if offset >= g {
            return Err(Error::InfeasibleMargins(format!(
                "angle: cone offset {offset:.4} leaves no headroom below g = {g}"
            )));
        }
        out.cone_offset = offset;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub p: Vector3<f64>,
    pub t: f64,
    pub radius: f64,
}

/// Pinned derivatives at the ends: entry `r` is the value of the `r`-th
/// derivative.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EndpointPins {
    pub initial: Vec<Vector3<f64>>,
    #[serde(rename = "final")]
    pub final_: Vec<Vector3<f64>>,
}

impl EndpointPins {
    /// Same value `p` for position and zeros for derivatives `1..=order`.
    pub fn at_rest(p0: Vector3<f64>, pf: Vector3<f64>, order: usize) -> Self {
        let mut initial = vec![Vector3::zeros(); order + 1];
        let mut final_ = initial.clone();
        initial[0] = p0;
        final_[0] = pf;
        EndpointPins { initial, final_ }
    }
}

/// Ordered sets; segment `l` of the curve is kept in `sets[l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub sets: Vec<ConvexSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum IntervalKind {
    PositionInSet { set: ConvexSet },
    SpeedBound { v_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalConstraint {
    pub t1: f64,
    pub t2: f64,
    #[serde(flatten)]
    pub kind: IntervalKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZetaMode {
    #[default]
    Vector,
    Scalar,
}

/// Everything the planner needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningScenario {
    pub name: String,
    pub t0: f64,
    pub tf: f64,
    pub n: usize,
    pub degree: usize,
    pub gravity: f64,
    pub bounds: SafetyBounds,
    pub waypoints: Vec<Waypoint>,
    pub pins: EndpointPins,
    pub intervals: Vec<IntervalConstraint>,
    pub corridor: Option<Corridor>,
    pub zeta_mode: ZetaMode,
    /// when set, bounds are shrunk for a tracker with these parameters
    pub tracking_margins: Option<CbfParams>,
}

impl PlanningScenario {
    pub fn new(name: impl Into<String>, t0: f64, tf: f64, n: usize, degree: usize) -> Self {
        PlanningScenario {
            name: name.into(),
            t0,
            tf,
            n,
            degree,
            gravity: GRAVITY,
            bounds: SafetyBounds::default(),
            waypoints: Vec::new(),
            pins: EndpointPins::default(),
            intervals: Vec::new(),
            corridor: None,
            zeta_mode: ZetaMode::Vector,
            tracking_margins: None,
        }
    }

    pub fn knots(&self) -> Result<KnotVector> {
        KnotVector::clamped_uniform(self.t0, self.tf, self.n, self.degree)
    }

    /// Bounds the planner actually enforces (after tracking margins).
    pub fn effective_bounds(&self) -> Result<SafetyBounds> {
        match &self.tracking_margins {
            Some(cbf) => compile_tracking_margins(&self.bounds, cbf, self.gravity),
            None => Ok(self.bounds.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub objective: f64,
    /// integral of squared snap over the three axes
    pub snap: f64,
    /// Wall-clock time of compile and solve. Not serialized, so that plan
    /// documents of the same scenario are byte-identical; reads back as 0.
    #[serde(skip, default)]
    pub solve_seconds: f64,
    pub max_residual: f64,
    pub iterations: usize,
    pub variables: usize,
    pub blocks: Vec<BlockCount>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCount {
    pub block: String,
    pub count: usize,
}

/// Solved trajectory. `zeta` has one entry per nonempty span in vector mode
/// and a single entry in scalar mode; it is empty without a rate bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPlan {
    pub curve: SplineCurve,
    pub zeta: Vec<f64>,
    pub zeta_mode: ZetaMode,
    pub stats: SolveStats,
}

impl TrajectoryPlan {
    /// `zeta` value governing span `l`.
    pub fn zeta_for_span(&self, l: usize) -> Option<f64> {
        match self.zeta_mode {
            ZetaMode::Vector => self.zeta.get(l.checked_sub(self.curve.degree())?).copied(),
            ZetaMode::Scalar => self.zeta.first().copied(),
        }
    }
}

/// Compiled planning problem, ready for the solver.
pub struct CompiledProblem {
    pub program: ConeProgram,
    pub layout: Layout,
    pub blocks: Vec<BlockCount>,
    pub knots: KnotVector,
}

/// Translates a scenario into a cone program without solving it.
pub fn compile(scenario: &PlanningScenario) -> Result<CompiledProblem> {
    let knots = scenario.knots()?;
    if knots.degree() < 4 {
        return Err(Error::InvalidArgument(format!("degree must be at least 4, got {}", knots.degree())));
    }
    let g = scenario.gravity;
    if !(g > 0.0) {
        return Err(Error::InvalidArgument(format!("gravity must be positive, got {g}")));
    }
    scenario.bounds.validate(g)?;
    let bounds = scenario.effective_bounds()?;
    bounds.validate(g)?;

    let with_zeta = bounds.omega_max.is_some();
    let mut b = ProblemBuilder::new(knots.clone(), g, if with_zeta { Some(scenario.zeta_mode) } else { None })?;
    b.compile_snap_objective()?;
    b.compile_position(&bounds.position_cones)?;
    if let Some(v) = bounds.v_max {
        b.compile_velocity(v)?;
    }
    if let Some(eps) = bounds.eps {
        b.compile_angle_cone(eps, bounds.cone_offset)?;
    }
    if bounds.t_min.is_some() || bounds.t_max.is_some() {
        b.compile_thrust(bounds.t_min, bounds.t_max)?;
    }
    if let Some(w) = bounds.omega_max {
        b.compile_angular_velocity(w)?;
    }
    b.compile_waypoints(&scenario.waypoints)?;
    b.compile_endpoints(&scenario.pins)?;
    if let Some(c) = &scenario.corridor {
        b.compile_corridor(c)?;
    }
    for ic in &scenario.intervals {
        b.compile_interval(ic)?;
    }
    let blocks = b.block_counts();
    let (program, layout) = b.finish_with_layout();
    Ok(CompiledProblem { layout, blocks, program, knots })
}

/// Builds and solves the planning problem.
pub fn plan(scenario: &PlanningScenario, opts: &SolverOptions) -> Result<TrajectoryPlan> {
    let start = Instant::now();
    let CompiledProblem { program: mut cp, mut layout, blocks, knots } = compile(scenario)?;
    let mut sol = cp.solve_with(opts);
    if sol.status == SolveStatus::NumericalFailure {
        // one retry with the epigraph variable rescaled by the snap the
        // stalled iterate reached
        if let Some(s) = layout.snap {
            let w = sol.x[s];
            if w.is_finite() && w > 10.0 && reweight_snap(&mut cp, &mut layout, w).is_ok() {
                sol = cp.solve_with(opts);
            }
        }
    }
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            let list: Vec<String> = blocks.iter().map(|bc| format!("{}={}", bc.block, bc.count)).collect();
            return Err(Error::Infeasible(format!(
                "no trajectory satisfies the constraints (blocks: {})",
                list.join(", ")
            )));
        }
        other => {
            return Err(Error::Solver(format!(
                "solver stopped with status {other:?} after {} iterations (residual {:.3e})",
                sol.iterations, sol.max_residual
            )))
        }
    }

    let np = knots.num_control_points();
    let control = DMatrix::from_fn(3, np, |axis, j| sol.x[layout.point(j, axis)]);
    let zeta: Vec<f64> = layout.zeta.clone().map(|i| sol.x[i]).collect();
    let snap = layout.snap.map_or(0.0, |s| layout.snap_weight * sol.x[s]);
    let curve = SplineCurve::new(knots, control)?;
    Ok(TrajectoryPlan {
        curve,
        zeta,
        zeta_mode: scenario.zeta_mode,
        stats: SolveStats {
            objective: sol.objective,
            snap,
            solve_seconds: start.elapsed().as_secs_f64(),
            max_residual: sol.max_residual,
            iterations: sol.iterations,
            variables: layout.n,
            blocks,
        },
    })
}
