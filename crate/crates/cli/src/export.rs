//! Tabular samples of plans and traces for plotting.

use flatsafe::planner::TrajectoryPlan;
use flatsafe::sim::SimTrace;
use flatsafe::verify::{kinematics, sample_times};
use serde::Serialize;

pub const PLAN_COLUMNS: [&str; 11] =
    ["t", "x", "y", "z", "speed", "phi_deg", "theta_deg", "T", "p_deg_s", "q_deg_s", "zeta_active"];

pub const TRACE_COLUMNS: [&str; 17] = [
    "t",
    "x",
    "y",
    "z",
    "speed",
    "phi_deg",
    "theta_deg",
    "T",
    "h_xu",
    "h_xl",
    "h_yu",
    "h_yl",
    "h_zu",
    "h_zl",
    "x_ref",
    "y_ref",
    "z_ref",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Samples the plan on every span. Where the flat map is singular the
/// attitude columns hold NaN; `zeta_active` is NaN without a rate bound.
pub fn plan_table(plan: &TrajectoryPlan, gravity: f64, per_span: usize) -> flatsafe::Result<Table> {
    let curve = &plan.curve;
    let knots = curve.knots();
    let mut rows = Vec::new();
    for t in sample_times(curve, per_span) {
        let k = kinematics(curve, t, gravity)?;
        let span = knots.span_index(t)?;
        let zeta = plan.zeta_for_span(span).unwrap_or(f64::NAN);
        let (phi, theta, thrust, p, q) = match &k.flat {
            Some((s, u)) => (s.xi.x, s.xi.y, u.thrust, u.omega.x, u.omega.y),
            None => (f64::NAN, f64::NAN, k.r2.x.hypot(k.r2.y).hypot(k.r2.z + gravity), f64::NAN, f64::NAN),
        };
        rows.push(vec![
            t,
            k.r.x,
            k.r.y,
            k.r.z,
            k.r1.norm(),
            phi.to_degrees(),
            theta.to_degrees(),
            thrust,
            p.to_degrees(),
            q.to_degrees(),
            zeta,
        ]);
    }
    Ok(Table { columns: PLAN_COLUMNS.iter().map(|s| s.to_string()).collect(), rows })
}

/// One row per control tick.
pub fn trace_table(trace: &SimTrace) -> Table {
    let rows = trace
        .records
        .iter()
        .map(|s| {
            let mut row =
                vec![s.t, s.r.x, s.r.y, s.r.z, s.r1.norm(), s.phi.to_degrees(), s.theta.to_degrees(), s.thrust];
            row.extend_from_slice(&s.barrier);
            row.extend_from_slice(&[s.reference.r.x, s.reference.r.y, s.reference.r.z]);
            row
        })
        .collect();
    Table { columns: TRACE_COLUMNS.iter().map(|s| s.to_string()).collect(), rows }
}

pub fn write_csv(table: &Table, out: impl std::io::Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}
