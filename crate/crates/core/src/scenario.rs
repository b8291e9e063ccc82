//! Scenario files: a versioned TOML document describing one planning problem
//! plus the tracker and simulation settings used to fly it.
//!
//! Angles are written in degrees and converted on load; everything else is
//! SI. Named convex sets are declared once under `[sets.<name>]` and referred
//! to by interval constraints and the corridor sequence.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flatness::GRAVITY;
use crate::planner::{
    ConvexSet, Corridor, EndpointPins, IntervalConstraint, IntervalKind, PlanningScenario, SafetyBounds, SocSet,
    TrajectoryPlan, Waypoint, ZetaMode,
};
use crate::sim::{Controller, SimConfig};
use crate::tracker::{CbfParams, NominalGains};

pub const FORMAT_VERSION: u32 = 1;

/// Scenarios shipped with the library, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("hover", include_str!("../scenarios/hover.toml")),
    ("example1", include_str!("../scenarios/example1.toml")),
    ("example1_published", include_str!("../scenarios/example1_published.toml")),
    ("example2_window", include_str!("../scenarios/example2_window.toml")),
    ("example3_c2_c3", include_str!("../scenarios/example3_c2_c3.toml")),
    ("example3_c3_c2", include_str!("../scenarios/example3_c3_c2.toml")),
    ("example3_c2_c1", include_str!("../scenarios/example3_c2_c1.toml")),
    ("example3_c1_c3", include_str!("../scenarios/example3_c1_c3.toml")),
    ("example3_c3_c4", include_str!("../scenarios/example3_c3_c4.toml")),
    ("example3_c4_c2", include_str!("../scenarios/example3_c4_c2.toml")),
    ("margin_demo", include_str!("../scenarios/margin_demo.toml")),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KnotsDoc {
    t0: f64,
    tf: f64,
    n: usize,
    degree: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsDoc {
    v_max: Option<f64>,
    eps_deg: Option<f64>,
    t_min: Option<f64>,
    t_max: Option<f64>,
    omega_max_deg: Option<f64>,
    /// names of sets every control point must lie in
    #[serde(default)]
    position_sets: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum ConeDoc {
    Ball { center: [f64; 3], radius: f64 },
    Ellipsoid { scale: [f64; 3], offset: [f64; 3] },
    Halfspace { normal: [f64; 3], beta: f64 },
    Soc { a: Vec<[f64; 3]>, b: Vec<f64>, c: [f64; 3], d: f64 },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetDoc {
    /// `[I; -I] r <= box`
    #[serde(rename = "box")]
    bounds: Option<[f64; 6]>,
    #[serde(default)]
    cones: Vec<ConeDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WaypointDoc {
    p: [f64; 3],
    t: f64,
    #[serde(default)]
    radius: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PinsDoc {
    /// value of derivative `r` at the start, `r = 0, 1, ...`
    #[serde(default)]
    initial: Vec<[f64; 3]>,
    #[serde(default, rename = "final")]
    final_: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntervalDoc {
    t1: f64,
    t2: f64,
    set: Option<String>,
    v_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum GainsDoc {
    Preset(String),
    Custom { kp: f64, kd: f64, kff: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackingDoc {
    delta: f64,
    a1: f64,
    a2: f64,
    #[serde(default = "default_gains")]
    gains: GainsDoc,
    #[serde(default = "yes")]
    filter: bool,
    /// shrink the planning bounds for this tracker
    #[serde(default)]
    apply_margins: bool,
    #[serde(default)]
    psi_deg: f64,
}

fn default_gains() -> GainsDoc {
    GainsDoc::Preset("well-tuned".into())
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimDoc {
    control_rate: Option<f64>,
    substeps: Option<usize>,
    duration: Option<f64>,
    initial_r: Option<[f64; 3]>,
    initial_r1: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    version: u32,
    name: String,
    #[serde(default)]
    description: String,
    gravity: Option<f64>,
    #[serde(default)]
    zeta_mode: ZetaMode,
    knots: KnotsDoc,
    #[serde(default)]
    bounds: BoundsDoc,
    #[serde(default)]
    sets: BTreeMap<String, SetDoc>,
    #[serde(default)]
    waypoints: Vec<WaypointDoc>,
    #[serde(default)]
    pins: PinsDoc,
    #[serde(default)]
    intervals: Vec<IntervalDoc>,
    /// ordered set names, one per curve segment
    corridor: Option<Vec<String>>,
    tracking: Option<TrackingDoc>,
    #[serde(default)]
    sim: SimDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingConfig {
    pub cbf: CbfParams,
    pub gains: NominalGains,
    pub filter: bool,
    pub psi: f64,
}

/// A loaded and validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub planning: PlanningScenario,
    pub description: String,
    pub tracking: Option<TrackingConfig>,
    pub control_rate: f64,
    pub substeps: usize,
    pub duration: Option<f64>,
    pub initial_r: Option<Vector3<f64>>,
    pub initial_r1: Option<Vector3<f64>>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Scenario(msg.into())
}

fn cone(doc: &ConeDoc) -> Result<SocSet> {
    Ok(match doc {
        ConeDoc::Ball { center, radius } => {
            if !(*radius >= 0.0) {
                return Err(bad(format!("ball radius must be >= 0, got {radius}")));
            }
            SocSet::ball(Vector3::from(*center), *radius)
        }
        ConeDoc::Ellipsoid { scale, offset } => SocSet::ellipsoid(Vector3::from(*scale), Vector3::from(*offset)),
        ConeDoc::Halfspace { normal, beta } => SocSet::halfspace(Vector3::from(*normal), *beta),
        ConeDoc::Soc { a, b, c, d } => {
            let rows: Vec<f64> = a.iter().flatten().copied().collect();
            SocSet::new(DMatrix::from_row_slice(a.len(), 3, &rows), DVector::from_vec(b.clone()), Vector3::from(*c), *d)
                .map_err(|e| bad(e.to_string()))?
        }
    })
}

fn convex_set(name: &str, doc: &SetDoc) -> Result<ConvexSet> {
    let mut set = match doc.bounds {
        Some(b) => {
            for k in 0..3 {
                if b[k] < -b[k + 3] {
                    return Err(bad(format!("set {name}: empty box along axis {k}")));
                }
            }
            ConvexSet::from_box_bounds(name, b)
        }
        None => ConvexSet::new(name, Vec::new()),
    };
    for c in &doc.cones {
        set.cones.push(cone(c)?);
    }
    if set.cones.is_empty() {
        return Err(bad(format!("set {name} has no constraints")));
    }
    Ok(set)
}

fn gains(doc: &GainsDoc) -> Result<NominalGains> {
    match doc {
        GainsDoc::Preset(p) => match p.as_str() {
            "well-tuned" => Ok(NominalGains::well_tuned()),
            "detuned" => Ok(NominalGains::detuned()),
            other => Err(bad(format!("unknown gain preset {other:?} (use well-tuned or detuned)"))),
        },
        GainsDoc::Custom { kp, kd, kff } => Ok(NominalGains { kp: *kp, kd: *kd, kff: *kff }),
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Scenario> {
        let doc: ScenarioDoc = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        if doc.version != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {} (expected {FORMAT_VERSION})", doc.version)));
        }
        let k = &doc.knots;
        let mut p = PlanningScenario::new(doc.name.clone(), k.t0, k.tf, k.n, k.degree);
        let knots = p.knots().map_err(|e| bad(format!("knots: {e}")))?;
        p.gravity = doc.gravity.unwrap_or(GRAVITY);
        p.zeta_mode = doc.zeta_mode;

        let mut sets = BTreeMap::new();
        for (name, s) in &doc.sets {
            sets.insert(name.clone(), convex_set(name, s)?);
        }
        let lookup = |name: &str| sets.get(name).cloned().ok_or_else(|| bad(format!("unknown set {name:?}")));

        let b = &doc.bounds;
        let mut position_cones = Vec::new();
        for name in &b.position_sets {
            position_cones.extend(lookup(name)?.cones);
        }
        p.bounds = SafetyBounds {
            v_max: b.v_max,
            eps: b.eps_deg.map(f64::to_radians),
            t_min: b.t_min,
            t_max: b.t_max,
            omega_max: b.omega_max_deg.map(f64::to_radians),
            position_cones,
            cone_offset: 0.0,
        };
        p.bounds.validate(p.gravity).map_err(|e| bad(format!("bounds: {e}")))?;

        for (i, w) in doc.waypoints.iter().enumerate() {
            knots.check_time(w.t).map_err(|e| bad(format!("waypoint {i}: {e}")))?;
            if !(w.radius >= 0.0) {
                return Err(bad(format!("waypoint {i}: radius must be >= 0")));
            }
            p.waypoints.push(Waypoint { p: Vector3::from(w.p), t: w.t, radius: w.radius });
        }
        for (label, list) in [("initial", &doc.pins.initial), ("final", &doc.pins.final_)] {
            if list.len() > k.degree + 1 {
                return Err(bad(format!("{label} pins: {} orders exceed degree {}", list.len(), k.degree)));
            }
        }
        p.pins = EndpointPins {
            initial: doc.pins.initial.iter().map(|v| Vector3::from(*v)).collect(),
            final_: doc.pins.final_.iter().map(|v| Vector3::from(*v)).collect(),
        };
        for (i, iv) in doc.intervals.iter().enumerate() {
            if !(iv.t1 < iv.t2) {
                return Err(bad(format!("interval {i}: empty window [{}, {}]", iv.t1, iv.t2)));
            }
            knots.check_time(iv.t1).and(knots.check_time(iv.t2)).map_err(|e| bad(format!("interval {i}: {e}")))?;
            let kind = match (&iv.set, iv.v_max) {
                (Some(s), None) => IntervalKind::PositionInSet { set: lookup(s)? },
                (None, Some(v)) if v >= 0.0 => IntervalKind::SpeedBound { v_max: v },
                _ => return Err(bad(format!("interval {i}: give exactly one of `set` or a nonnegative `v_max`"))),
            };
            p.intervals.push(IntervalConstraint { t1: iv.t1, t2: iv.t2, kind });
        }
        if let Some(seq) = &doc.corridor {
            if seq.len() + k.degree != k.n + 1 {
                return Err(bad(format!(
                    "corridor of {} sets needs n = {}, got n = {}",
                    seq.len(),
                    seq.len() + k.degree - 1,
                    k.n
                )));
            }
            p.corridor = Some(Corridor { sets: seq.iter().map(|s| lookup(s)).collect::<Result<_>>()? });
        }

        let tracking = match &doc.tracking {
            Some(t) => {
                let cbf = CbfParams::new(t.delta, t.a1, t.a2).map_err(|e| bad(format!("tracking: {e}")))?;
                if t.apply_margins {
                    p.tracking_margins = Some(cbf);
                    p.effective_bounds().map_err(|e| bad(format!("tracking margins: {e}")))?;
                }
                Some(TrackingConfig { cbf, gains: gains(&t.gains)?, filter: t.filter, psi: t.psi_deg.to_radians() })
            }
            None => None,
        };
        let s = &doc.sim;
        let control_rate = s.control_rate.unwrap_or(100.0);
        let substeps = s.substeps.unwrap_or(10);
        if !(control_rate > 0.0) || substeps == 0 {
            return Err(bad("sim: control_rate and substeps must be positive"));
        }
        if let Some(d) = s.duration {
            if !(d >= 0.0) {
                return Err(bad("sim: duration must be >= 0"));
            }
        }
        Ok(Scenario {
            planning: p,
            description: doc.description,
            tracking,
            control_rate,
            substeps,
            duration: s.duration,
            initial_r: s.initial_r.map(Vector3::from),
            initial_r1: s.initial_r1.map(Vector3::from),
        })
    }

    pub fn bundled(name: &str) -> Result<Scenario> {
        let text = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| bad(format!("no bundled scenario named {name:?}")))?;
        Scenario::from_toml_str(text)
    }

    pub fn bundled_names() -> Vec<&'static str> {
        BUNDLED.iter().map(|(n, _)| *n).collect()
    }

    /// Simulation settings; the start state defaults to the plan's start at
    /// rest, duration to the plan length.
    pub fn sim_config(&self, plan: &TrajectoryPlan) -> Result<SimConfig> {
        let k = plan.curve.knots();
        let start = plan.curve.eval_upto(1, k.start())?;
        let r0 = self.initial_r.unwrap_or_else(|| Vector3::new(start[0][0], start[0][1], start[0][2]));
        let r1 = self.initial_r1.unwrap_or_else(|| Vector3::new(start[1][0], start[1][1], start[1][2]));
        Ok(SimConfig {
            control_rate: self.control_rate,
            substeps: self.substeps,
            duration: self.duration.unwrap_or(k.end() - k.start()),
            initial_r: r0,
            initial_r1: r1,
        })
    }

    /// Controller for `track`, or `None` if the scenario has no tracker.
    pub fn controller(&self, filter_override: Option<bool>) -> Option<Controller> {
        self.tracking.as_ref().map(|t| Controller {
            gains: t.gains,
            cbf: t.cbf,
            filter: filter_override.unwrap_or(t.filter),
            psi: t.psi,
            gravity: self.planning.gravity,
        })
    }
}
