use std::ops::{Range, RangeInclusive};

use nalgebra::{DMatrix, DVector};

use super::{BlockCount, Corridor, EndpointPins, IntervalConstraint, IntervalKind, SocSet, Waypoint, ZetaMode};
use crate::conic::{add_quadratic_epigraph, ConeProgram};
use crate::error::{Error, Result};
use crate::spline::{basis_eval, DerivativeMatrix, KnotVector, SnapGram};

/// Decision vector layout: control points (x, y, z interleaved), then the
/// thrust lower bounds `zeta`, then the snap epigraph variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub points: usize,
    pub zeta: Range<usize>,
    pub snap: Option<usize>,
    /// objective weight on the epigraph variable, which holds snap divided
    /// by this weight
    pub snap_weight: f64,
    /// index of the epigraph cone and the number of factor rows in it
    pub snap_cone: Option<(usize, usize)>,
    pub n: usize,
}

impl Layout {
    pub fn point(&self, j: usize, axis: usize) -> usize {
        3 * j + axis
    }
}

/// Rewrites the snap epigraph as `||F x||^2 / w <= s'` with objective
/// weight `w` on `s'`, leaving the problem itself unchanged. Snap values
/// of realistic plans reach the thousands while every other variable is of
/// order one; bringing the epigraph variable back to order one removes a
/// spread that can stall the interior-point iteration short of accuracy.
pub fn reweight_snap(cp: &mut ConeProgram, layout: &mut Layout, w: f64) -> Result<()> {
    let (Some(s), Some((idx, k))) = (layout.snap, layout.snap_cone) else {
        return Err(Error::InvalidArgument("program has no snap epigraph".into()));
    };
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::InvalidArgument(format!("snap weight must be positive, got {w}")));
    }
    cp.soc[idx].a.rows_mut(0, k).scale_mut(1.0 / w.sqrt());
    cp.f[s] *= w;
    layout.snap_weight *= w;
    Ok(())
}

/// Spans and virtual-control-point indices emitted for a local constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalEmission {
    pub spans: RangeInclusive<usize>,
    pub indices: RangeInclusive<usize>,
    pub order: usize,
}

/// Accumulates the constraints of one planning problem.
pub struct ProblemBuilder {
    knots: KnotVector,
    g: f64,
    bmats: Vec<DMatrix<f64>>,
    cp: ConeProgram,
    layout: Layout,
    zeta_mode: Option<ZetaMode>,
    blocks: Vec<BlockCount>,
}

impl ProblemBuilder {
    /// `zeta_mode` allocates the thrust lower-bound variables used by the
    /// body-rate constraint; pass `None` when rates are unconstrained.
    pub fn new(knots: KnotVector, g: f64, zeta_mode: Option<ZetaMode>) -> Result<Self> {
        let np = knots.num_control_points();
        let nz = match zeta_mode {
            None => 0,
            Some(ZetaMode::Vector) => knots.n() - knots.degree() + 1,
            Some(ZetaMode::Scalar) => 1,
        };
        let points = 3 * np;
        let n = points + nz;
        let bmats = (0..=knots.degree())
            .map(|r| DerivativeMatrix::build(&knots, r).map(|b| b.matrix().clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProblemBuilder {
            knots,
            g,
            bmats,
            cp: ConeProgram::new(n),
            layout: Layout { points: np, zeta: points..n, snap: None, snap_weight: 1.0, snap_cone: None, n },
            zeta_mode,
            blocks: Vec::new(),
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn block_counts(&self) -> Vec<BlockCount> {
        self.blocks.clone()
    }

    pub fn program(&self) -> &ConeProgram {
        &self.cp
    }

    pub fn finish(self) -> ConeProgram {
        self.cp
    }

    pub fn finish_with_layout(self) -> (ConeProgram, Layout) {
        (self.cp, self.layout)
    }

    fn count(&mut self, block: &str, k: usize) {
        match self.blocks.iter_mut().find(|b| b.block == block) {
            Some(b) => b.count += k,
            None => self.blocks.push(BlockCount { block: block.to_string(), count: k }),
        }
    }

    /// `3 x n` map from the decision vector to virtual control point `j` of
    /// order `r`.
    pub fn vcp_map(&self, r: usize, j: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(3, self.cp.n());
        let b = &self.bmats[r];
        for i in 0..self.layout.points {
            let w = b[(i, j)];
            if w != 0.0 {
                for axis in 0..3 {
                    m[(axis, self.layout.point(i, axis))] = w;
                }
            }
        }
        m
    }

    /// `3 x n` map from the decision vector to `s^(r)(t)`.
    pub fn eval_map(&self, r: usize, t: f64) -> Result<DMatrix<f64>> {
        let d = self.knots.degree();
        if r > d {
            return Err(Error::OrderTooHigh { order: r, degree: d });
        }
        let lam = DVector::from_vec(basis_eval(&self.knots, d - r, t)?);
        let w = &self.bmats[r] * lam;
        let mut m = DMatrix::zeros(3, self.cp.n());
        for i in 0..self.layout.points {
            if w[i] != 0.0 {
                for axis in 0..3 {
                    m[(axis, self.layout.point(i, axis))] = w[i];
                }
            }
        }
        Ok(m)
    }

    fn add_in_set(&mut self, map: &DMatrix<f64>, set: &SocSet) -> Result<()> {
        let c = map.tr_mul(&DVector::from_column_slice(set.c.as_slice()));
        if set.is_halfspace() {
            self.cp.add_lin(-c, set.d)
        } else {
            self.cp.add_soc(&set.a * map, set.b.clone(), c, set.d)
        }
    }

    /// Objective `integral ||r''''||^2 - sum(zeta)`.
    pub fn compile_snap_objective(&mut self) -> Result<()> {
        let gram = SnapGram::build(&self.knots)?;
        let k = gram.factor.nrows();
        let np = self.layout.points;
        let mut factor = DMatrix::zeros(3 * k, 3 * np);
        let mut selector = Vec::with_capacity(3 * np);
        for axis in 0..3 {
            factor.view_mut((axis * k, axis * np), (k, np)).copy_from(&gram.factor);
            selector.extend((0..np).map(|j| self.layout.point(j, axis)));
        }
        let s = add_quadratic_epigraph(&mut self.cp, &factor, &selector)?;
        self.layout.snap_cone = Some((self.cp.soc.len() - 1, factor.nrows()));
        self.layout.snap = Some(s);
        self.layout.n = self.cp.n();
        self.cp.f[s] = 1.0;
        for i in self.layout.zeta.clone() {
            self.cp.f[i] = -1.0;
        }
        self.count("snap", 1);
        Ok(())
    }

    /// Every control point in every cone.
    pub fn compile_position(&mut self, cones: &[SocSet]) -> Result<()> {
        for set in cones {
            for j in 0..self.layout.points {
                let m = self.vcp_map(0, j);
                self.add_in_set(&m, set)?;
            }
            self.count("position", self.layout.points);
        }
        Ok(())
    }

    pub fn compile_velocity(&mut self, v_max: f64) -> Result<()> {
        let n = self.knots.n();
        for j in 1..=n {
            let m = self.vcp_map(1, j);
            self.cp.add_soc(m, DVector::zeros(3), DVector::zeros(self.cp.n()), v_max)?;
        }
        self.count("velocity", n);
        Ok(())
    }

    /// Acceleration cone keeping roll and pitch within `eps` for any yaw;
    /// `offset` tightens the right-hand side.
    pub fn compile_angle_cone(&mut self, eps: f64, offset: f64) -> Result<()> {
        if !(eps > 0.0 && eps < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidArgument(format!("angle bound must lie in (0, pi/2), got {eps}")));
        }
        let cot = (1.0 / eps.tan()).abs();
        let n = self.knots.n();
        for j in 2..=n {
            let m = self.vcp_map(2, j);
            let a = m.rows(0, 2) * cot;
            let c = m.row(2).transpose();
            self.cp.add_soc(a, DVector::zeros(2), c, self.g - offset)?;
        }
        self.count("angle", n - 1);
        Ok(())
    }

    pub fn compile_thrust(&mut self, t_min: Option<f64>, t_max: Option<f64>) -> Result<()> {
        let g = self.g;
        if let (Some(lo), Some(hi)) = (t_min, t_max) {
            if !(0.0 <= lo && lo <= g && g <= hi) {
                return Err(Error::InvalidArgument(format!("need 0 <= T_min <= g <= T_max, got [{lo}, {hi}]")));
            }
        }
        let n = self.knots.n();
        for j in 2..=n {
            let m = self.vcp_map(2, j);
            if let Some(hi) = t_max {
                self.cp.add_soc(m.clone(), DVector::from_vec(vec![0.0, 0.0, g]), DVector::zeros(self.cp.n()), hi)?;
            }
            if let Some(lo) = t_min {
                self.cp.add_lin(-m.row(2).transpose(), g - lo)?;
            }
        }
        if t_max.is_some() {
            self.count("thrust-max", n - 1);
        }
        if t_min.is_some() {
            self.count("thrust-min", n - 1);
        }
        Ok(())
    }

    /// Per span `l`: `z`-acceleration VCPs at least `zeta - g` and jerk VCPs
    /// within `omega_max * zeta`.
    pub fn compile_angular_velocity(&mut self, omega_max: f64) -> Result<()> {
        let Some(mode) = self.zeta_mode else {
            return Err(Error::InvalidArgument("builder was created without thrust lower-bound variables".into()));
        };
        let d = self.knots.degree();
        let n = self.knots.n();
        let groups: Vec<(usize, RangeInclusive<usize>, RangeInclusive<usize>)> = match mode {
            ZetaMode::Vector => {
                (d..=n).map(|l| (self.layout.zeta.start + l - d, l + 2 - d..=l, l + 3 - d..=l)).collect()
            }
            ZetaMode::Scalar => vec![(self.layout.zeta.start, 2..=n, 3..=n)],
        };
        let (mut lin, mut soc) = (0, 0);
        for (zi, acc, jerk) in groups {
            for j in acc {
                let m = self.vcp_map(2, j);
                let mut a = -m.row(2).transpose();
                a[zi] += 1.0;
                self.cp.add_lin(a, self.g)?;
                lin += 1;
            }
            for j in jerk {
                let m = self.vcp_map(3, j);
                let mut c = DVector::zeros(self.cp.n());
                c[zi] = omega_max;
                self.cp.add_soc(m, DVector::zeros(3), c, 0.0)?;
                soc += 1;
            }
        }
        self.count("rate-thrust", lin);
        self.count("rate-jerk", soc);
        Ok(())
    }

    pub fn compile_waypoints(&mut self, wps: &[Waypoint]) -> Result<()> {
        for wp in wps {
            if !(wp.radius >= 0.0) {
                return Err(Error::InvalidArgument(format!("waypoint radius must be >= 0, got {}", wp.radius)));
            }
            let m = self.eval_map(0, wp.t)?;
            let p = DVector::from_column_slice(wp.p.as_slice());
            if wp.radius == 0.0 {
                self.cp.add_eq(m, p)?;
            } else {
                self.cp.add_soc(m, -p, DVector::zeros(self.cp.n()), wp.radius)?;
            }
        }
        if !wps.is_empty() {
            self.count("waypoints", wps.len());
        }
        Ok(())
    }

    pub fn compile_endpoints(&mut self, pins: &EndpointPins) -> Result<()> {
        let (t0, tf) = (self.knots.start(), self.knots.end());
        let mut k = 0;
        for (t, list) in [(t0, &pins.initial), (tf, &pins.final_)] {
            for (r, v) in list.iter().enumerate() {
                let m = self.eval_map(r, t)?;
                self.cp.add_eq(m, DVector::from_column_slice(v.as_slice()))?;
                k += 1;
            }
        }
        if k > 0 {
            self.count("endpoints", k);
        }
        Ok(())
    }

    /// Segment `l` (span `l + d`) is kept in `sets[l]` through its `d + 1`
    /// control points.
    pub fn compile_corridor(&mut self, corridor: &Corridor) -> Result<()> {
        let d = self.knots.degree();
        let ns = corridor.sets.len();
        if ns == 0 || self.knots.n() != ns + d - 1 {
            return Err(Error::InvalidArgument(format!(
                "a corridor of {ns} sets needs N = {}, got N = {}",
                ns + d - 1,
                self.knots.n()
            )));
        }
        let mut k = 0;
        // consecutive segments in the same set share d points; emit each
        // (point, set) membership once
        let mut seen: Vec<(usize, usize)> = Vec::new();
        for (l, set) in corridor.sets.iter().enumerate() {
            let si = corridor.sets.iter().position(|s| s == set).unwrap_or(l);
            for j in l..=l + d {
                if seen.contains(&(j, si)) {
                    continue;
                }
                seen.push((j, si));
                let m = self.vcp_map(0, j);
                for cone in &set.cones {
                    self.add_in_set(&m, cone)?;
                    k += 1;
                }
            }
        }
        self.count("corridor", k);
        Ok(())
    }

    /// Smallest union of whole spans covering `[t1, t2]`.
    pub fn interval_spans(&self, t1: f64, t2: f64) -> Result<RangeInclusive<usize>> {
        if !(t1 < t2) {
            return Err(Error::InvalidArgument(format!("empty window [{t1}, {t2}]")));
        }
        self.knots.check_time(t1)?;
        self.knots.check_time(t2)?;
        let tau = self.knots.knots();
        let (d, n) = (self.knots.degree(), self.knots.n());
        let first = self.knots.span_index(t1)?;
        // last span whose start lies strictly before t2
        let last = (d..=n).rev().find(|&l| tau[l] < t2).unwrap_or(d);
        Ok(first..=last.max(first))
    }

    pub fn compile_interval(&mut self, ic: &IntervalConstraint) -> Result<IntervalEmission> {
        let spans = self.interval_spans(ic.t1, ic.t2)?;
        let d = self.knots.degree();
        let order = match ic.kind {
            IntervalKind::PositionInSet { .. } => 0,
            IntervalKind::SpeedBound { .. } => 1,
        };
        let indices = spans.start() + order - d..=*spans.end();
        let mut k = 0;
        for j in indices.clone() {
            let m = self.vcp_map(order, j);
            match &ic.kind {
                IntervalKind::PositionInSet { set } => {
                    for cone in &set.cones {
                        self.add_in_set(&m, cone)?;
                        k += 1;
                    }
                }
                IntervalKind::SpeedBound { v_max } => {
                    self.cp.add_soc(m, DVector::zeros(3), DVector::zeros(self.cp.n()), *v_max)?;
                    k += 1;
                }
            }
        }
        self.count(if order == 0 { "interval-position" } else { "interval-speed" }, k);
        Ok(IntervalEmission { spans, indices, order })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn builder(n: usize, d: usize, tf: f64) -> ProblemBuilder {
        ProblemBuilder::new(KnotVector::clamped_uniform(0.0, tf, n, d).unwrap(), 9.81, Some(ZetaMode::Vector)).unwrap()
    }

    #[test]
    fn window_index_ranges() {
        let mut b = builder(45, 5, 9.0);
        let set = super::super::ConvexSet::new(
            "sv",
            vec![SocSet::ellipsoid(Vector3::new(1.33, 13.3, 13.3), Vector3::new(0.0, -10.0, -14.7))],
        );
        let pos = b
            .compile_interval(&IntervalConstraint { t1: 3.0, t2: 6.0, kind: IntervalKind::PositionInSet { set } })
            .unwrap();
        assert_eq!(pos.spans, 18..=32);
        assert_eq!(pos.indices, 13..=32);
        let vel = b
            .compile_interval(&IntervalConstraint { t1: 3.0, t2: 6.0, kind: IntervalKind::SpeedBound { v_max: 0.5 } })
            .unwrap();
        assert_eq!(vel.indices, 14..=32);
    }

    #[test]
    fn full_window_matches_global() {
        let b = builder(10, 5, 5.0);
        assert_eq!(b.interval_spans(0.0, 5.0).unwrap(), 5..=10);
        assert!(b.interval_spans(2.0, 2.0).is_err());
        assert!(b.interval_spans(-1.0, 2.0).is_err());
    }

    #[test]
    fn maps_reproduce_curve() {
        use crate::spline::SplineCurve;
        let b = builder(10, 5, 5.0);
        let x = DVector::from_fn(b.layout().n, |i, _| ((i * 7919) % 23) as f64 / 7.0 - 1.0);
        let control = DMatrix::from_fn(3, 11, |a, j| x[3 * j + a]);
        let c = SplineCurve::new(b.knots.clone(), control).unwrap();
        for r in 0..=3 {
            for &t in &[0.0, 0.3, 2.2, 5.0] {
                let m = b.eval_map(r, t).unwrap();
                assert!((&m * &x - c.eval(r, t).unwrap()).amax() < 1e-9);
            }
            let v = c.vcps(r).unwrap();
            for j in 0..v.points.ncols() {
                assert!((b.vcp_map(r, j) * &x - v.column(j)).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn corridor_needs_matching_n() {
        let mut b = builder(10, 5, 5.0);
        let set = super::super::ConvexSet::from_box_bounds("b", [1.0; 6]);
        let c = Corridor { sets: vec![set.clone(); 5] };
        assert!(b.compile_corridor(&c).is_err());
        let c = Corridor { sets: vec![set; 6] };
        b.compile_corridor(&c).unwrap();
    }

    #[test]
    fn scalar_mode_has_one_zeta() {
        let b =
            ProblemBuilder::new(KnotVector::clamped_uniform(0.0, 30.0, 40, 5).unwrap(), 9.81, Some(ZetaMode::Scalar))
                .unwrap();
        assert_eq!(b.layout().zeta.len(), 1);
        let b = builder(40, 5, 30.0);
        assert_eq!(b.layout().zeta.len(), 36);
    }
}
