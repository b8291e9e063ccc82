use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `{ r : ||A r + b|| <= c^T r + d }` in position coordinates. With zero rows
/// in `A` this is the half-space `c^T r + d >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocSet {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: Vector3<f64>,
    pub d: f64,
}

impl SocSet {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: Vector3<f64>, d: f64) -> Result<Self> {
        if a.ncols() != 3 || a.nrows() != b.len() {
            return Err(Error::Dimension(format!(
                "set matrix must be k x 3 with k offsets, got {}x{} and {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        Ok(SocSet { a, b, c, d })
    }

    pub fn ball(center: Vector3<f64>, radius: f64) -> Self {
        SocSet {
            a: DMatrix::identity(3, 3),
            b: DVector::from_column_slice((-center).as_slice()),
            c: Vector3::zeros(),
            d: radius,
        }
    }

    /// `||diag(scale) r + offset|| <= 1`.
    pub fn ellipsoid(scale: Vector3<f64>, offset: Vector3<f64>) -> Self {
        SocSet {
            a: DMatrix::from_diagonal(&DVector::from_column_slice(scale.as_slice())),
            b: DVector::from_column_slice(offset.as_slice()),
            c: Vector3::zeros(),
            d: 1.0,
        }
    }

    /// `n^T r <= beta`.
    pub fn halfspace(n: Vector3<f64>, beta: f64) -> Self {
        SocSet { a: DMatrix::zeros(0, 3), b: DVector::zeros(0), c: -n, d: beta }
    }

    pub fn is_halfspace(&self) -> bool {
        self.a.nrows() == 0
    }

    /// Signed slack `c^T r + d - ||A r + b||`, nonnegative inside.
    pub fn margin(&self, r: &Vector3<f64>) -> f64 {
        let lhs = if self.is_halfspace() {
            0.0
        } else {
            (&self.a * DVector::from_column_slice(r.as_slice()) + &self.b).norm()
        };
        self.c.dot(r) + self.d - lhs
    }
}

/// Intersection of cones; boxes and general polytopes are lists of
/// half-spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexSet {
    pub name: String,
    pub cones: Vec<SocSet>,
}

impl ConvexSet {
    pub fn new(name: impl Into<String>, cones: Vec<SocSet>) -> Self {
        ConvexSet { name: name.into(), cones }
    }

    /// `{ r : [I; -I] r <= bounds }`, i.e. `r <= bounds[0..3]` and
    /// `r >= -bounds[3..6]`.
    pub fn from_box_bounds(name: impl Into<String>, bounds: [f64; 6]) -> Self {
        let mut cones = Vec::with_capacity(6);
        for k in 0..3 {
            let mut e = Vector3::zeros();
            e[k] = 1.0;
            cones.push(SocSet::halfspace(e, bounds[k]));
            cones.push(SocSet::halfspace(-e, bounds[k + 3]));
        }
        ConvexSet::new(name, cones)
    }

    pub fn margin(&self, r: &Vector3<f64>) -> f64 {
        self.cones.iter().map(|c| c.margin(r)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, r: &Vector3<f64>) -> bool {
        self.margin(r) >= 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_membership() {
        let b = ConvexSet::from_box_bounds("c1", [1.0, 0.3, 1.5, -0.6, 0.1, 0.0]);
        assert!(b.contains(&Vector3::new(0.8, 0.1, 1.0)));
        assert!(!b.contains(&Vector3::new(0.5, 0.1, 1.0)));
        assert!(!b.contains(&Vector3::new(0.8, -0.2, 1.0)));
        assert!((b.margin(&Vector3::new(0.8, 0.1, 1.0)) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn ellipsoid_center() {
        let s = SocSet::ellipsoid(Vector3::new(1.33, 13.3, 13.3), Vector3::new(0.0, -10.0, -14.7));
        let center = Vector3::new(0.0, 10.0 / 13.3, 14.7 / 13.3);
        assert!((s.margin(&center) - 1.0).abs() < 1e-12);
        assert!(s.margin(&Vector3::new(0.0, 0.0, 1.1)) < 0.0);
    }

    #[test]
    fn ball_and_halfspace() {
        let b = SocSet::ball(Vector3::new(1.0, 0.0, 0.0), 2.0);
        assert!((b.margin(&Vector3::new(1.0, 0.0, 0.0)) - 2.0).abs() < 1e-15);
        let h = SocSet::halfspace(Vector3::new(0.0, 0.0, 1.0), 1.0);
        assert!(h.is_halfspace());
        assert_eq!(h.margin(&Vector3::new(5.0, 5.0, 0.25)), 0.75);
        assert!(SocSet::new(DMatrix::zeros(2, 2), DVector::zeros(2), Vector3::zeros(), 0.0).is_err());
    }
}
