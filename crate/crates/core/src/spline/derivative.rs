use nalgebra::DMatrix;

use super::KnotVector;
use crate::error::{Error, Result};

/// Time-invariant matrix `B_r` of shape `(N+1) x (N+r+1)` mapping control
/// points to `r`-th order virtual control points: `P^(r) = P B_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeMatrix {
    order: usize,
    matrix: DMatrix<f64>,
}

impl DerivativeMatrix {
    /// `B_r = M_{d,d-r} C_r`, with `M` the right-product of the bidiagonal
    /// difference factors and `C_r` the zero-padded identity.
    pub fn build(knots: &KnotVector, order: usize) -> Result<Self> {
        let d = knots.degree();
        if order > d {
            return Err(Error::OrderTooHigh { order, degree: d });
        }
        let n = knots.n();
        let tau = knots.knots();

        let mut m = DMatrix::<f64>::identity(n + 1, n + 1);
        for i in 1..=order {
            let cols = n - i + 1;
            let mut f = DMatrix::<f64>::zeros(n - i + 2, cols);
            for k in 0..cols {
                let a = (d - i + 1) as f64 / (tau[k + d + 1] - tau[k + i]);
                f[(k, k)] = -a;
                f[(k + 1, k)] = a;
            }
            m *= f;
        }

        let mut matrix = DMatrix::<f64>::zeros(n + 1, n + order + 1);
        matrix.view_mut((0, order), (n + 1, n - order + 1)).copy_from(&m);
        Ok(DerivativeMatrix { order, matrix })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Entry `b_{r,i+1,j+1}` (zero-based `i`, `j`).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// Column `j`: weights of each control point in virtual control point `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.matrix.column(j).iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_zero_is_identity() {
        let k = KnotVector::clamped_uniform(0.0, 10.0, 12, 5).unwrap();
        let b = DerivativeMatrix::build(&k, 0).unwrap();
        assert_eq!(b.matrix(), &DMatrix::identity(13, 13));
    }

    #[test]
    fn boundary_columns_vanish() {
        let k = KnotVector::clamped_uniform(0.0, 10.0, 12, 5).unwrap();
        for r in 1..=5 {
            let b = DerivativeMatrix::build(&k, r).unwrap();
            assert_eq!(b.matrix().shape(), (13, 13 + r));
            for j in (0..r).chain(13..13 + r) {
                assert!(b.matrix().column(j).iter().all(|&x| x == 0.0), "r={r} j={j}");
            }
        }
        assert!(DerivativeMatrix::build(&k, 6).is_err());
    }

    #[test]
    fn first_order_is_scaled_difference() {
        // on uniform clamped knots the interior first-order VCPs are
        // (P_{k+1} - P_k) * d / (tau_{k+d+1} - tau_{k+1})
        let k = KnotVector::clamped_uniform(0.0, 6.0, 8, 3).unwrap();
        let b = DerivativeMatrix::build(&k, 1).unwrap();
        let tau = k.knots();
        for kk in 0..8 {
            let a = 3.0 / (tau[kk + 4] - tau[kk + 1]);
            assert!((b.entry(kk, kk + 1) + a).abs() < 1e-14);
            assert!((b.entry(kk + 1, kk + 1) - a).abs() < 1e-14);
        }
    }

    #[test]
    fn columns_of_derivatives_sum_to_zero() {
        // constants are annihilated by every derivative
        let k = KnotVector::clamped_uniform(0.0, 30.0, 40, 5).unwrap();
        for r in 1..=5 {
            let b = DerivativeMatrix::build(&k, r).unwrap();
            for j in 0..b.matrix().ncols() {
                let s: f64 = b.matrix().column(j).sum();
                assert!(s.abs() < 1e-9, "r={r} j={j} sum={s}");
            }
        }
    }
}
