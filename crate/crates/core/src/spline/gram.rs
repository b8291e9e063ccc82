use nalgebra::DMatrix;

use super::{basis_eval, DerivativeMatrix, KnotVector};
use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, exact for polynomials of
/// degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-like initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            if n == 0 {
                break;
            }
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Per-axis snap Gram `Q = G^T G` with `x^T Q x = integral of (x^{(4)})^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapGram {
    pub q: DMatrix<f64>,
    /// rows are `sqrt(lambda_k) v_k^T` for the retained eigenpairs of `Q`
    pub factor: DMatrix<f64>,
}

impl SnapGram {
    pub fn build(knots: &KnotVector) -> Result<Self> {
        let d = knots.degree();
        if d < 4 {
            return Err(Error::InvalidArgument(format!("snap objective needs degree >= 4, got {d}")));
        }
        let q_deg = d - 4;
        let nb = knots.n() + 5;
        let (nodes, weights) = gauss_legendre(q_deg + 1);

        let mut gram = DMatrix::<f64>::zeros(nb, nb);
        for l in knots.spans() {
            let (a, b) = knots.span_bounds(l);
            let half = 0.5 * (b - a);
            for (x, w) in nodes.iter().zip(&weights) {
                let t = a + half * (x + 1.0);
                let lam = basis_eval(knots, q_deg, t)?;
                let lo = l - q_deg;
                for i in lo..=l {
                    for j in lo..=l {
                        gram[(i, j)] += w * half * lam[i] * lam[j];
                    }
                }
            }
        }

        let b4 = DerivativeMatrix::build(knots, 4)?;
        let mut q = b4.matrix() * gram * b4.matrix().transpose();
        q = 0.5 * (&q + q.transpose());

        let eig = q.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().fold(0.0_f64, |m, &x| m.max(x));
        let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&k| eig.eigenvalues[k] > 1e-12 * max).collect();
        let mut factor = DMatrix::zeros(keep.len(), q.nrows());
        for (row, &k) in keep.iter().enumerate() {
            let s = eig.eigenvalues[k].sqrt();
            for c in 0..q.ncols() {
                factor[(row, c)] = s * eig.eigenvectors[(c, k)];
            }
        }
        Ok(SnapGram { q, factor })
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(x);
        (v.transpose() * &self.q * &v)[(0, 0)]
    }
}
