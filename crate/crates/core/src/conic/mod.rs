//! Second-order cone programs in the form
//!
//! ```text
//! minimize    f^T x
//! subject to  ||A_i x + b_i|| <= c_i^T x + d_i
//!             E_j x = g_j
//!             a_k^T x <= beta_k
//! ```
//!
//! together with an interior-point solver for them.

mod ipm;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ipm::SolverOptions;

/// `||a x + b|| <= c^T x + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub d: f64,
}

impl SocConstraint {
    /// Signed slack `c^T x + d - ||a x + b||`.
    pub fn slack(&self, x: &DVector<f64>) -> f64 {
        self.c.dot(x) + self.d - (&self.a * x + &self.b).norm()
    }
}

/// `e x = g`.
#[derive(Debug, Clone, PartialEq)]
pub struct EqConstraint {
    pub e: DMatrix<f64>,
    pub g: DVector<f64>,
}

/// `a^T x <= beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinIneq {
    pub a: DVector<f64>,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConeProgram {
    n: usize,
    pub f: DVector<f64>,
    pub soc: Vec<SocConstraint>,
    pub eq: Vec<EqConstraint>,
    pub lin: Vec<LinIneq>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub objective: f64,
    /// Worst relative constraint violation of `x`, evaluated directly on
    /// the program (see [`ConeProgram::max_residual`]).
    pub max_residual: f64,
    pub iterations: usize,
}

impl ConeProgram {
    pub fn new(n: usize) -> Self {
        ConeProgram { n, f: DVector::zeros(n), ..Default::default() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Appends a variable with zero objective weight and returns its index.
    pub fn add_variable(&mut self) -> usize {
        let n = self.n;
        self.n += 1;
        self.f = self.f.clone().insert_row(n, 0.0);
        for s in &mut self.soc {
            s.a = s.a.clone().insert_column(n, 0.0);
            s.c = s.c.clone().insert_row(n, 0.0);
        }
        for e in &mut self.eq {
            e.e = e.e.clone().insert_column(n, 0.0);
        }
        for l in &mut self.lin {
            l.a = l.a.clone().insert_row(n, 0.0);
        }
        n
    }

    pub fn set_objective(&mut self, f: DVector<f64>) -> Result<()> {
        if f.len() != self.n {
            return Err(Error::Dimension(format!("objective has {} entries, need {}", f.len(), self.n)));
        }
        self.f = f;
        Ok(())
    }

    pub fn add_soc(&mut self, a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>, d: f64) -> Result<()> {
        if a.ncols() != self.n || c.len() != self.n || a.nrows() != b.len() {
            return Err(Error::Dimension(format!(
                "cone constraint {}x{} / {} / {} for {} variables",
                a.nrows(),
                a.ncols(),
                b.len(),
                c.len(),
                self.n
            )));
        }
        self.soc.push(SocConstraint { a, b, c, d });
        Ok(())
    }

    pub fn add_eq(&mut self, e: DMatrix<f64>, g: DVector<f64>) -> Result<()> {
        if e.ncols() != self.n || e.nrows() != g.len() {
            return Err(Error::Dimension(format!(
                "equality {}x{} / {} for {} variables",
                e.nrows(),
                e.ncols(),
                g.len(),
                self.n
            )));
        }
        self.eq.push(EqConstraint { e, g });
        Ok(())
    }

    pub fn add_lin(&mut self, a: DVector<f64>, beta: f64) -> Result<()> {
        if a.len() != self.n {
            return Err(Error::Dimension(format!("inequality has {} entries, need {}", a.len(), self.n)));
        }
        self.lin.push(LinIneq { a, beta });
        Ok(())
    }

    /// Worst violation of any constraint at `x` (0 when feasible).
    /// Worst constraint violation at `x`, each one measured relative to
    /// the size of its own terms, `max(1, |lhs|, |rhs|)`. For constraints
    /// on quantities of order one this is the plain violation; a cone whose
    /// sides are large (an objective epigraph, say) is not held to a
    /// precision finer than double arithmetic can represent.
    pub fn max_residual(&self, x: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for s in &self.soc {
            let lhs = (&s.a * x + &s.b).norm();
            let rhs = s.c.dot(x) + s.d;
            worst = worst.max((lhs - rhs) / 1f64.max(lhs).max(rhs.abs()));
        }
        for e in &self.eq {
            let ex = &e.e * x;
            for (v, g) in ex.iter().zip(e.g.iter()) {
                worst = worst.max((v - g).abs() / 1f64.max(v.abs()).max(g.abs()));
            }
        }
        for l in &self.lin {
            let v = l.a.dot(x);
            worst = worst.max((v - l.beta) / 1f64.max(v.abs()).max(l.beta.abs()));
        }
        worst
    }

    pub fn objective_at(&self, x: &DVector<f64>) -> f64 {
        self.f.dot(x)
    }

    pub fn solve(&self, tol: f64) -> Solution {
        ipm::solve(self, &SolverOptions { feas_tol: tol, obj_tol: tol, ..Default::default() })
    }

    pub fn solve_with(&self, opts: &SolverOptions) -> Solution {
        ipm::solve(self, opts)
    }

    /// Plain-text dump: a header line `n soc eq lin`, the objective, then one
    /// block per constraint with its matrices written row by row.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let row = |out: &mut String, v: &mut dyn Iterator<Item = f64>| {
            let parts: Vec<String> = v.map(|x| format!("{x:e}")).collect();
            let _ = writeln!(out, "{}", parts.join(" "));
        };
        let _ = writeln!(out, "{} {} {} {}", self.n, self.soc.len(), self.eq.len(), self.lin.len());
        let _ = write!(out, "f ");
        row(&mut out, &mut self.f.iter().copied());
        for s in &self.soc {
            let _ = writeln!(out, "soc {}", s.a.nrows());
            for r in 0..s.a.nrows() {
                let _ = write!(out, "A ");
                row(&mut out, &mut s.a.row(r).iter().copied());
            }
            let _ = write!(out, "b ");
            row(&mut out, &mut s.b.iter().copied());
            let _ = write!(out, "c ");
            row(&mut out, &mut s.c.iter().copied());
            let _ = writeln!(out, "d {:e}", s.d);
        }
        for e in &self.eq {
            let _ = writeln!(out, "eq {}", e.e.nrows());
            for r in 0..e.e.nrows() {
                let _ = write!(out, "E ");
                row(&mut out, &mut e.e.row(r).iter().copied());
            }
            let _ = write!(out, "g ");
            row(&mut out, &mut e.g.iter().copied());
        }
        for l in &self.lin {
            let _ = write!(out, "lin ");
            row(&mut out, &mut l.a.iter().copied().chain(std::iter::once(l.beta)));
        }
        out
    }
}

/// Appends `s` with `||G x_sel||^2 <= s` via `||(2 G x_sel, s - 1)|| <= s + 1`
/// and returns the index of `s`.
pub fn add_quadratic_epigraph(cp: &mut ConeProgram, g: &DMatrix<f64>, selector: &[usize]) -> Result<usize> {
    if g.ncols() != selector.len() {
        return Err(Error::Dimension(format!(
            "factor has {} columns but {} variables were selected",
            g.ncols(),
            selector.len()
        )));
    }
    if let Some(&bad) = selector.iter().find(|&&i| i >= cp.n()) {
        return Err(Error::Dimension(format!("selected variable {bad} does not exist")));
    }
    let s = cp.add_variable();
    let n = cp.n();
    let k = g.nrows();
    let mut a = DMatrix::zeros(k + 1, n);
    for (col, &var) in selector.iter().enumerate() {
        for r in 0..k {
            a[(r, var)] += 2.0 * g[(r, col)];
        }
    }
    a[(k, s)] = 1.0;
    let mut b = DVector::zeros(k + 1);
    b[k] = -1.0;
    let mut c = DVector::zeros(n);
    c[s] = 1.0;
    cp.add_soc(a, b, c, 1.0)?;
    Ok(s)
}
