use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{basis_eval, DerivativeMatrix, KnotVector};
use crate::error::{Error, Result};

/// `r`-th order virtual control points `P^(r) = P B_r`, one column per point.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualControlPoints {
    pub order: usize,
    pub points: DMatrix<f64>,
}

impl VirtualControlPoints {
    pub fn column(&self, j: usize) -> DVector<f64> {
        self.points.column(j).into_owned()
    }

    /// Indices of the points that are not structurally zero: `r..=N`.
    pub fn active(&self) -> std::ops::RangeInclusive<usize> {
        self.order..=self.points.ncols() - 1 - self.order
    }
}

/// B-spline curve `r(t) = P Lambda_d(t)` with `m` spatial rows.
///
/// Derivative matrices and virtual control points for every order up to `d`
/// are computed once at construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawCurve", into = "RawCurve")]
pub struct SplineCurve {
    knots: KnotVector,
    control: DMatrix<f64>,
    vcps: Vec<DMatrix<f64>>,
}

impl PartialEq for SplineCurve {
    fn eq(&self, other: &Self) -> bool {
        self.knots == other.knots && self.control == other.control
    }
}

#[derive(Serialize, Deserialize)]
struct RawCurve {
    knots: KnotVector,
    /// control points, one inner array per point
    control_points: Vec<Vec<f64>>,
}

impl From<SplineCurve> for RawCurve {
    fn from(c: SplineCurve) -> Self {
        let control_points = c.control.column_iter().map(|col| col.iter().copied().collect()).collect();
        RawCurve { knots: c.knots, control_points }
    }
}

impl TryFrom<RawCurve> for SplineCurve {
    type Error = Error;

    fn try_from(raw: RawCurve) -> Result<Self> {
        let m = raw.control_points.first().map_or(0, Vec::len);
        if raw.control_points.iter().any(|p| p.len() != m) {
            return Err(Error::Dimension("control points have mixed dimensions".into()));
        }
        let cols = raw.control_points.len();
        let control = DMatrix::from_fn(m, cols, |i, j| raw.control_points[j][i]);
        SplineCurve::new(raw.knots, control)
    }
}

impl SplineCurve {
    pub fn new(knots: KnotVector, control: DMatrix<f64>) -> Result<Self> {
        if control.ncols() != knots.num_control_points() {
            return Err(Error::Dimension(format!(
                "expected {} control points, got {}",
                knots.num_control_points(),
                control.ncols()
            )));
        }
        if control.nrows() == 0 {
            return Err(Error::Dimension("control points must have at least one row".into()));
        }
        let mut vcps = Vec::with_capacity(knots.degree() + 1);
        for r in 0..=knots.degree() {
            let b = DerivativeMatrix::build(&knots, r)?;
            vcps.push(&control * b.matrix());
        }
        Ok(SplineCurve { knots, control, vcps })
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn control_points(&self) -> &DMatrix<f64> {
        &self.control
    }

    pub fn dim(&self) -> usize {
        self.control.nrows()
    }

    pub fn degree(&self) -> usize {
        self.knots.degree()
    }

    /// `s^(r)(t) = P B_r Lambda_{d-r}(t)`.
    pub fn eval(&self, r: usize, t: f64) -> Result<DVector<f64>> {
        let d = self.degree();
        if r > d {
            return Err(Error::OrderTooHigh { order: r, degree: d });
        }
        let span = self.knots.span_index(t)?;
        let basis = basis_eval(&self.knots, d - r, t)?;
        let vcp = &self.vcps[r];
        let mut out = DVector::zeros(self.dim());
        // nonzero basis entries are span-(d-r)..=span
        for (j, b) in basis.iter().enumerate().take(span + 1).skip(span + r - d) {
            out.axpy(*b, &vcp.column(j), 1.0);
        }
        Ok(out)
    }

    /// Position and derivatives `0..=max_order` at `t`.
    pub fn eval_upto(&self, max_order: usize, t: f64) -> Result<Vec<DVector<f64>>> {
        (0..=max_order).map(|r| self.eval(r, t)).collect()
    }

    pub fn vcps(&self, r: usize) -> Result<VirtualControlPoints> {
        let d = self.degree();
        if r > d {
            return Err(Error::OrderTooHigh { order: r, degree: d });
        }
        Ok(VirtualControlPoints { order: r, points: self.vcps[r].clone() })
    }

    /// Indices of the `d - r + 1` order-`r` virtual control points whose
    /// convex hull contains `s^(r)` on span `l`.
    pub fn span_support(&self, r: usize, l: usize) -> std::ops::RangeInclusive<usize> {
        l + r - self.degree()..=l
    }
}
