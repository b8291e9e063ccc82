//! Primal-dual interior-point method on the homogeneous self-dual embedding,
//! with Nesterov–Todd scaling and Mehrotra predictor-corrector steps.
//!
//! Works on the standard form `min c^T x  s.t.  A x = b,  G x + s = h,
//! s in K` where `K` is a nonnegative orthant followed by second-order cones.

use nalgebra::{DMatrix, DVector};

use super::{ConeProgram, Solution, SolveStatus};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Relative primal/dual residual tolerance; also the bound on the
    /// directly evaluated constraint violation of an optimal point.
    pub feas_tol: f64,
    /// Relative duality-gap tolerance.
    pub obj_tol: f64,
    pub max_iter: usize,
    pub equilibrate: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { feas_tol: 1e-8, obj_tol: 1e-8, max_iter: 150, equilibrate: true }
    }
}

const STEP_FRACTION: f64 = 0.99;
const KKT_REG: f64 = 1e-11;
const REFINE_STEPS: usize = 8;
/// Equilibrated primal residual below which the unscaled one is checked.
const PRIMAL_SCREEN: f64 = 1e-6;
/// Infeasibility certificate accepted when the iteration stalls.
const INFEASIBLE_REDUCED: f64 = 5e-5;

#[derive(Debug, Clone)]
struct Cones {
    l: usize,
    soc: Vec<(usize, usize)>,
    m: usize,
}

impl Cones {
    fn degree(&self) -> usize {
        self.l + self.soc.len()
    }

    fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.m);
        e.rows_mut(0, self.l).fill(1.0);
        for &(o, _) in &self.soc {
            e[o] = 1.0;
        }
        e
    }
}

/// Compressed sparse rows.
struct Csr {
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl Csr {
    fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    indices.push(j);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Csr { ncols: m.ncols(), indptr, indices, data }
    }

    fn nrows(&self) -> usize {
        self.indptr.len() - 1
    }

    fn row_amax(&self, first: usize, count: usize) -> f64 {
        self.data[self.indptr[first]..self.indptr[first + count]].iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn scale_rows(&mut self, first: usize, count: usize, f: f64) {
        for v in &mut self.data[self.indptr[first]..self.indptr[first + count]] {
            *v *= f;
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols);
        for i in 0..self.nrows() {
            for k in self.indptr[i]..self.indptr[i + 1] {
                m[(i, self.indices[k])] = self.data[k];
            }
        }
        m
    }

    fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.nrows(), |i, _| {
            (self.indptr[i]..self.indptr[i + 1]).map(|k| self.data[k] * x[self.indices[k]]).sum()
        })
    }

    fn tr_mul(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ncols);
        for i in 0..self.nrows() {
            let yi = y[i];
            if yi != 0.0 {
                for k in self.indptr[i]..self.indptr[i + 1] {
                    out[self.indices[k]] += self.data[k] * yi;
                }
            }
        }
        out
    }
}

/// Rows of one cone (a single orthant row or a whole SOC) restricted to
/// the columns they touch.
struct Block {
    offset: usize,
    cols: Vec<usize>,
    sub: DMatrix<f64>,
    /// `sub^T J sub` for wide cone blocks, `J = diag(1, -I)`
    gjg: Option<DMatrix<f64>>,
}

/// Cone blocks touching at least this many columns get their Hessian
/// contribution from the rank-one form of the NT scaling.
const WIDE_BLOCK: usize = 24;

struct Standard {
    c: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    h: DVector<f64>,
    cones: Cones,
    /// column scaling: original x = col_scale .* scaled x
    col_scale: DVector<f64>,
    a_sp: Csr,
    g_sp: Csr,
    blocks: Vec<Block>,
}

fn blocks_of(g: &Csr, cones: &Cones) -> Vec<Block> {
    let ranges = (0..cones.l).map(|i| (i, 1)).chain(cones.soc.iter().copied());
    ranges
        .map(|(o, k)| {
            let mut cols: Vec<usize> = g.indices[g.indptr[o]..g.indptr[o + k]].to_vec();
            cols.sort_unstable();
            cols.dedup();
            let mut sub = DMatrix::zeros(k, cols.len());
            for i in 0..k {
                for q in g.indptr[o + i]..g.indptr[o + i + 1] {
                    let j = cols.binary_search(&g.indices[q]).unwrap_or_default();
                    sub[(i, j)] = g.data[q];
                }
            }
            let gjg = (o >= cones.l && cols.len() >= WIDE_BLOCK).then(|| {
                let mut js = sub.clone();
                js.rows_mut(1, k - 1).neg_mut();
                sub.tr_mul(&js)
            });
            Block { offset: o, cols, sub, gjg }
        })
        .collect()
}

fn assemble(cp: &ConeProgram, equilibrate: bool) -> Standard {
    let n = cp.n();
    let p: usize = cp.eq.iter().map(|e| e.e.nrows()).sum();
    let l = cp.lin.len();
    let qdims: Vec<usize> = cp.soc.iter().map(|s| s.a.nrows() + 1).collect();
    let m = l + qdims.iter().sum::<usize>();

    let mut a = DMatrix::zeros(p, n);
    let mut b = DVector::zeros(p);
    let mut row = 0;
    for e in &cp.eq {
        a.rows_mut(row, e.e.nrows()).copy_from(&e.e);
        b.rows_mut(row, e.e.nrows()).copy_from(&e.g);
        row += e.e.nrows();
    }

    let mut g = DMatrix::zeros(m, n);
    let mut h = DVector::zeros(m);
    for (i, lin) in cp.lin.iter().enumerate() {
        g.row_mut(i).copy_from(&lin.a.transpose());
        h[i] = lin.beta;
    }
    let mut soc = Vec::with_capacity(cp.soc.len());
    let mut off = l;
    for s in &cp.soc {
        let k = s.a.nrows() + 1;
        g.row_mut(off).copy_from(&(-s.c.transpose()));
        h[off] = s.d;
        g.rows_mut(off + 1, k - 1).copy_from(&(-&s.a));
        h.rows_mut(off + 1, k - 1).copy_from(&s.b);
        soc.push((off, k));
        off += k;
    }
    let cones = Cones { l, soc, m };

    let mut c = cp.f.clone();
    let mut col_scale = DVector::from_element(n, 1.0);
    let mut a_sp = Csr::from_dense(&a);
    let mut g_sp = Csr::from_dense(&g);
    if equilibrate {
        ruiz(&mut a_sp, &mut b, &mut g_sp, &mut h, &mut c, &mut col_scale, &cones);
    }
    Standard { a: a_sp.to_dense(), blocks: blocks_of(&g_sp, &cones), a_sp, g_sp, c, b, h, cones, col_scale }
}

/// Ruiz equilibration: rows of `A`, rows of `G` (one factor per cone block
/// so the cones are preserved) and columns of `[A; G]`.
fn ruiz(
    a: &mut Csr,
    b: &mut DVector<f64>,
    g: &mut Csr,
    h: &mut DVector<f64>,
    c: &mut DVector<f64>,
    col_scale: &mut DVector<f64>,
    cones: &Cones,
) {
    let n = c.len();
    let inv_sqrt = |x: f64| if x > 1e-300 { 1.0 / x.sqrt() } else { 1.0 };
    let row_groups: Vec<(usize, usize)> = (0..cones.l).map(|i| (i, 1)).chain(cones.soc.iter().copied()).collect();
    for _ in 0..15 {
        let mut col = vec![0.0f64; n];
        for m in [&*a, &*g] {
            for (&j, &v) in m.indices.iter().zip(&m.data) {
                col[j] = col[j].max(v.abs());
            }
        }
        let col: Vec<f64> = col.into_iter().map(inv_sqrt).collect();
        for m in [&mut *a, &mut *g] {
            for (&j, v) in m.indices.iter().zip(m.data.iter_mut()) {
                *v *= col[j];
            }
        }
        for j in 0..n {
            c[j] *= col[j];
            col_scale[j] *= col[j];
        }
        for i in 0..a.nrows() {
            let f = inv_sqrt(a.row_amax(i, 1));
            a.scale_rows(i, 1, f);
            b[i] *= f;
        }
        for &(o, k) in &row_groups {
            let f = inv_sqrt(g.row_amax(o, k));
            g.scale_rows(o, k, f);
            h.rows_mut(o, k).scale_mut(f);
        }
    }
}

/// `u0^2 - ||u1||^2`, computed as a product to limit cancellation.
fn soc_res(u: &[f64]) -> f64 {
    let n1 = u[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    (u[0] - n1) * (u[0] + n1)
}

fn interior(cones: &Cones, u: &DVector<f64>) -> bool {
    (0..cones.l).all(|i| u[i] > 0.0)
        && cones.soc.iter().all(|&(o, k)| {
            let blk = &u.as_slice()[o..o + k];
            blk[0] > 0.0 && soc_res(blk) > 0.0
        })
}

/// Largest `alpha` keeping `u + alpha d` in the cone (infinite if unbounded).
fn max_step(cones: &Cones, u: &DVector<f64>, d: &DVector<f64>) -> f64 {
    let mut alpha = f64::INFINITY;
    for i in 0..cones.l {
        if d[i] < 0.0 {
            alpha = alpha.min(-u[i] / d[i]);
        }
    }
    for &(o, k) in &cones.soc {
        let ub = &u.as_slice()[o..o + k];
        let db = &d.as_slice()[o..o + k];
        let nu = soc_res(ub).max(0.0).sqrt();
        if nu <= 0.0 {
            return 0.0;
        }
        let u0 = ub[0] / nu;
        let d0 = db[0] / nu;
        let mut rho0 = u0 * d0;
        for i in 1..k {
            rho0 -= ub[i] * db[i] / (nu * nu);
        }
        let coef = (rho0 + d0) / (u0 + 1.0);
        let mut r1 = 0.0;
        for i in 1..k {
            let v = db[i] / nu - coef * ub[i] / nu;
            r1 += v * v;
        }
        let gap = r1.sqrt() - rho0;
        if gap > 0.0 {
            alpha = alpha.min(1.0 / gap);
        }
    }
    alpha
}

/// Jordan product `u o v`.
fn circ(cones: &Cones, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(cones.m);
    for i in 0..cones.l {
        out[i] = u[i] * v[i];
    }
    for &(o, k) in &cones.soc {
        let mut dot = 0.0;
        for i in 0..k {
            dot += u[o + i] * v[o + i];
        }
        out[o] = dot;
        for i in 1..k {
            out[o + i] = u[o] * v[o + i] + v[o] * u[o + i];
        }
    }
    out
}

/// Solves `lambda o x = r` for `x`.
fn inv_circ(cones: &Cones, lam: &DVector<f64>, r: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(cones.m);
    for i in 0..cones.l {
        out[i] = r[i] / lam[i];
    }
    for &(o, k) in &cones.soc {
        let lb = &lam.as_slice()[o..o + k];
        let rho = soc_res(lb);
        let mut l1r1 = 0.0;
        for i in 1..k {
            l1r1 += lb[i] * r[o + i];
        }
        let x0 = (lb[0] * r[o] - l1r1) / rho;
        out[o] = x0;
        for i in 1..k {
            out[o + i] = (r[o + i] - x0 * lb[i]) / lb[0];
        }
    }
    out
}

/// Nesterov–Todd scaling `W` (symmetric) with `W z = W^{-1} s = lambda`.
struct Scaling {
    diag: Vec<f64>,
    /// per cone: (beta, normalized hyperbolic w)
    soc: Vec<(f64, Vec<f64>)>,
}

impl Scaling {
    fn new(cones: &Cones, s: &DVector<f64>, z: &DVector<f64>) -> Option<Self> {
        let diag = (0..cones.l).map(|i| (s[i] / z[i]).sqrt()).collect();
        let mut soc = Vec::with_capacity(cones.soc.len());
        for &(o, k) in &cones.soc {
            let sb = &s.as_slice()[o..o + k];
            let zb = &z.as_slice()[o..o + k];
            let (sr, zr) = (soc_res(sb), soc_res(zb));
            if !(sr > 0.0 && zr > 0.0) {
                return None;
            }
            let (sn, zn) = (sr.sqrt(), zr.sqrt());
            let sbar: Vec<f64> = sb.iter().map(|x| x / sn).collect();
            let zbar: Vec<f64> = zb.iter().map(|x| x / zn).collect();
            let dot: f64 = sbar.iter().zip(&zbar).map(|(a, b)| a * b).sum();
            let gamma = ((1.0 + dot) / 2.0).sqrt();
            let mut w = vec![0.0; k];
            w[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
            for i in 1..k {
                w[i] = (sbar[i] - zbar[i]) / (2.0 * gamma);
            }
            soc.push(((sn / zn).sqrt(), w));
        }
        Some(Scaling { diag, soc })
    }

    fn apply(&self, cones: &Cones, v: &[f64], out: &mut [f64], inverse: bool) {
        for i in 0..cones.l {
            out[i] = if inverse { v[i] / self.diag[i] } else { v[i] * self.diag[i] };
        }
        for (j, &(o, k)) in cones.soc.iter().enumerate() {
            self.apply_soc(j, &v[o..o + k], &mut out[o..o + k], inverse);
        }
    }

    fn apply_soc(&self, j: usize, v: &[f64], out: &mut [f64], inverse: bool) {
        let (beta, w) = &self.soc[j];
        let sign = if inverse { -1.0 } else { 1.0 };
        let scale = if inverse { 1.0 / beta } else { *beta };
        let w1v1: f64 = (1..v.len()).map(|i| w[i] * v[i]).sum();
        let v0 = v[0];
        out[0] = scale * (w[0] * v0 + sign * w1v1);
        let coef = sign * v0 + w1v1 / (1.0 + w[0]);
        for i in 1..v.len() {
            out[i] = scale * (v[i] + coef * w[i]);
        }
    }

    fn w(&self, cones: &Cones, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        self.apply(cones, v.as_slice(), out.as_mut_slice(), false);
        out
    }

    fn winv(&self, cones: &Cones, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        self.apply(cones, v.as_slice(), out.as_mut_slice(), true);
        out
    }
}

/// Factored reduced KKT system for
/// `[[0, A^T, G^T], [A, 0, 0], [G, 0, -W^2]]`.
struct Kkt<'a> {
    std: &'a Standard,
    scaling: &'a Scaling,
    factor: Factor,
}

type Dense = nalgebra::Dyn;

enum Factor {
    /// Cholesky of `H + reg I` and of the Schur complement `A H^-1 A^T + reg I`.
    Schur { h: nalgebra::Cholesky<f64, Dense>, s: nalgebra::Cholesky<f64, Dense>, ht_at: DMatrix<f64> },
    /// LU of the whole quasi-definite matrix when Cholesky breaks down.
    Lu(nalgebra::LU<f64, Dense, Dense>),
}

impl<'a> Kkt<'a> {
    fn new(std: &'a Standard, scaling: &'a Scaling) -> Self {
        let n = std.c.len();
        let p = std.b.len();
        let l = std.cones.l;
        let mut m = DMatrix::zeros(n, n);
        let mut buf = Vec::new();
        for (bi, blk) in std.blocks.iter().enumerate() {
            let k = blk.sub.nrows();
            if let Some(gjg) = &blk.gjg {
                // W^-2 = (2 (Jw)(Jw)^T - J) / beta^2
                let (beta, w) = &scaling.soc[bi - l];
                let mut jw = DVector::from_column_slice(w);
                jw.rows_mut(1, k - 1).neg_mut();
                let u = blk.sub.tr_mul(&jw);
                let b2 = beta * beta;
                for (a, &ca) in blk.cols.iter().enumerate() {
                    for (b, &cb) in blk.cols.iter().enumerate() {
                        m[(ca, cb)] += (2.0 * u[a] * u[b] - gjg[(a, b)]) / b2;
                    }
                }
                continue;
            }
            let mut sub = blk.sub.clone();
            if bi < l {
                sub.scale_mut(1.0 / scaling.diag[blk.offset]);
            } else {
                buf.resize(k, 0.0);
                for j in 0..sub.ncols() {
                    scaling.apply_soc(bi - l, sub.column(j).as_slice(), &mut buf, true);
                    sub.column_mut(j).copy_from_slice(&buf);
                }
            }
            let hb = sub.tr_mul(&sub);
            for (a, &ca) in blk.cols.iter().enumerate() {
                for (b, &cb) in blk.cols.iter().enumerate() {
                    m[(ca, cb)] += hb[(a, b)];
                }
            }
        }
        for i in 0..n {
            m[(i, i)] += KKT_REG;
        }
        let schur = m.clone().cholesky().and_then(|h| {
            let ht_at = h.solve(&std.a.transpose());
            let mut sm = &std.a * &ht_at;
            for i in 0..p {
                sm[(i, i)] += KKT_REG;
            }
            sm.cholesky().map(|s| Factor::Schur { h, s, ht_at })
        });
        let factor = schur.unwrap_or_else(|| {
            let mut k = DMatrix::zeros(n + p, n + p);
            k.view_mut((0, 0), (n, n)).copy_from(&m);
            k.view_mut((n, 0), (p, n)).copy_from(&std.a);
            k.view_mut((0, n), (n, p)).copy_from(&std.a.transpose());
            for i in 0..p {
                k[(n + i, n + i)] = -KKT_REG;
            }
            Factor::Lu(k.lu())
        });
        Kkt { std, scaling, factor }
    }

    fn v_inv(&self, v: &DVector<f64>) -> DVector<f64> {
        let c = &self.std.cones;
        self.scaling.winv(c, &self.scaling.winv(c, v))
    }

    fn v(&self, v: &DVector<f64>) -> DVector<f64> {
        let c = &self.std.cones;
        self.scaling.w(c, &self.scaling.w(c, v))
    }

    fn solve_once(
        &self,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let n = r1.len();
        let p = r2.len();
        let vr3 = self.v_inv(r3);
        let top = r1 + self.std.g_sp.tr_mul(&vr3);
        let (dx, dy) = match &self.factor {
            Factor::Schur { h, s, ht_at } => {
                // H dx + A^T dy = top, A dx - reg dy = r2
                let hx = h.solve(&top);
                let dy = s.solve(&(ht_at.tr_mul(&top) - r2));
                (hx - ht_at * &dy, dy)
            }
            Factor::Lu(lu) => {
                let mut rhs = DVector::zeros(n + p);
                rhs.rows_mut(0, n).copy_from(&top);
                rhs.rows_mut(n, p).copy_from(r2);
                let sol = lu.solve(&rhs)?;
                (sol.rows(0, n).into_owned(), sol.rows(n, p).into_owned())
            }
        };
        let dz = self.v_inv(&(self.std.g_sp.mul(&dx) - r3));
        Some((dx, dy, dz))
    }

    fn residual(
        &self,
        r: [&DVector<f64>; 3],
        x: &DVector<f64>,
        y: &DVector<f64>,
        z: &DVector<f64>,
    ) -> [DVector<f64>; 3] {
        let std = self.std;
        [r[0] - (std.a_sp.tr_mul(y) + std.g_sp.tr_mul(z)), r[1] - std.a_sp.mul(x), r[2] - (std.g_sp.mul(x) - self.v(z))]
    }

    fn solve(
        &self,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let r = [r1, r2, r3];
        let (mut x, mut y, mut z) = self.solve_once(r1, r2, r3)?;
        let bnorm = r1.amax().max(r2.amax()).max(r3.amax()).max(1e-300);
        let mut last = f64::INFINITY;
        for _ in 0..REFINE_STEPS {
            let [e1, e2, e3] = self.residual(r, &x, &y, &z);
            let err = e1.amax().max(e2.amax()).max(e3.amax());
            if !err.is_finite() {
                return None;
            }
            // converged, or stagnating at the factorization's accuracy
            if err <= 1e-14 * bnorm || err > 0.5 * last {
                break;
            }
            last = err;
            let (dx, dy, dz) = self.solve_once(&e1, &e2, &e3)?;
            x += dx;
            y += dy;
            z += dz;
        }
        Some((x, y, z))
    }
}

fn shift_into_cone(cones: &Cones, u: &mut DVector<f64>) {
    let mut viol = f64::NEG_INFINITY;
    for i in 0..cones.l {
        viol = viol.max(-u[i]);
    }
    for &(o, k) in &cones.soc {
        let n1 = u.rows(o + 1, k - 1).norm();
        viol = viol.max(n1 - u[o]);
    }
    if viol >= -1e-8 && cones.m > 0 {
        *u += cones.identity() * (1.0 + viol.max(0.0));
    }
}

pub(super) fn solve(cp: &ConeProgram, opts: &SolverOptions) -> Solution {
    let std = assemble(cp, opts.equilibrate);
    let result = run(&std, opts, cp);
    let (status, xs, iterations) = result;
    let x = xs.component_mul(&std.col_scale);
    let max_residual = cp.max_residual(&x);
    Solution { status, objective: cp.objective_at(&x), x, max_residual, iterations }
}

fn run(std: &Standard, opts: &SolverOptions, cp: &ConeProgram) -> (SolveStatus, DVector<f64>, usize) {
    let n = std.c.len();
    let p = std.b.len();
    let cones = &std.cones;
    let m = cones.m;
    let (c, a, b, g, h) = (&std.c, &std.a_sp, &std.b, &std.g_sp, &std.h);
    let unscale = |x: &DVector<f64>| x.component_mul(&std.col_scale);

    // initial point: least-squares solves with W = I
    let ident = Scaling {
        diag: vec![1.0; cones.l],
        soc: cones
            .soc
            .iter()
            .map(|&(_, k)| {
                let mut w = vec![0.0; k];
                w[0] = 1.0;
                (1.0, w)
            })
            .collect(),
    };
    let kkt = Kkt::new(std, &ident);
    let Some((mut x, _, zp)) = kkt.solve(&DVector::zeros(n), b, h) else {
        return (SolveStatus::NumericalFailure, DVector::zeros(n), 0);
    };
    let mut s = -zp;
    let Some((_, mut y, mut z)) = kkt.solve(&(-c), &DVector::zeros(p), &DVector::zeros(m)) else {
        return (SolveStatus::NumericalFailure, x, 0);
    };
    shift_into_cone(cones, &mut s);
    shift_into_cone(cones, &mut z);
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let deg = cones.degree() as f64;
    let (nb, nh, nc) = (b.norm().max(1.0), h.norm().max(1.0), c.norm().max(1.0));
    let e = cones.identity();
    let mut best: Option<(f64, DVector<f64>)> = None;
    // smallest infeasibility certificate seen while tau was shrinking
    let mut best_cert = f64::INFINITY;

    for it in 0..opts.max_iter {
        let rx = a.tr_mul(&y) + g.tr_mul(&z) + c * tau;
        let ry = a.mul(&x) - b * tau;
        let rz = &s + g.mul(&x) - h * tau;
        let ctx = c.dot(&x);
        let bty = b.dot(&y);
        let htz = h.dot(&z);
        let rt = kappa + ctx + bty + htz;
        let mu = (s.dot(&z) + tau * kappa) / (deg + 1.0);

        let pres = (ry.norm() / nb).max(rz.norm() / nh) / tau;
        let dres = rx.norm() / nc / tau;
        let pcost = ctx / tau;
        let dcost = -(bty + htz) / tau;
        let gap = s.dot(&z) / (tau * tau);
        let relgap = if pcost < 0.0 {
            gap / -pcost
        } else if dcost > 0.0 {
            gap / dcost
        } else {
            f64::INFINITY
        };
        // Primal feasibility is judged on the unscaled constraints, the same
        // figure reported as `max_residual`; near the optimum the
        // equilibrated residual can stall a little above it.
        if pres <= PRIMAL_SCREEN && dres <= opts.feas_tol && (gap <= opts.obj_tol || relgap <= opts.obj_tol) {
            let xo = &x / tau;
            let viol = cp.max_residual(&unscale(&xo));
            if viol <= opts.feas_tol {
                return (SolveStatus::Optimal, xo, it);
            }
            if best.as_ref().is_none_or(|(v, _)| viol < *v) {
                best = Some((viol, xo));
            }
        }

        if bty + htz < 0.0 {
            let cert = (a.tr_mul(&y) + g.tr_mul(&z)).norm() / -(bty + htz);
            if cert <= opts.feas_tol {
                return (SolveStatus::Infeasible, &x / tau, it);
            }
            if tau < kappa {
                best_cert = best_cert.min(cert);
            }
        }
        if ctx < 0.0 {
            let res = a.mul(&x).norm().max((g.mul(&x) + &s).norm()) / -ctx;
            if res <= opts.feas_tol {
                return (SolveStatus::Unbounded, x, it);
            }
        }

        let Some(scaling) = Scaling::new(cones, &s, &z) else { break };
        let lam = scaling.w(cones, &z);
        let kkt = Kkt::new(std, &scaling);
        let Some((x1, y1, z1)) = kkt.solve(&(-c), b, h) else { break };
        let denom_base = c.dot(&x1) + b.dot(&y1) + h.dot(&z1) - kappa / tau;

        let step = |sigma: f64, ds_rhs: &DVector<f64>, dk_rhs: f64| {
            let f = 1.0 - sigma;
            let dx_r = -&rx * f;
            let dy_r = -&ry * f;
            let dz_r = -&rz * f;
            let dt_r = -rt * f;
            let ls = inv_circ(cones, &lam, ds_rhs);
            let r3 = &dz_r - scaling.w(cones, &ls);
            let (x2, y2, z2) = kkt.solve(&dx_r, &(-&dy_r), &r3)?;
            let dtau = (dt_r - dk_rhs / tau - (c.dot(&x2) + b.dot(&y2) + h.dot(&z2))) / denom_base;
            let dx = x2 + &x1 * dtau;
            let dy = y2 + &y1 * dtau;
            let dz = z2 + &z1 * dtau;
            let ds = scaling.w(cones, &(ls - scaling.w(cones, &dz)));
            let dkappa = (dk_rhs - kappa * dtau) / tau;
            Some((dx, dy, dz, ds, dtau, dkappa))
        };

        let alpha_for = |dz: &DVector<f64>, ds: &DVector<f64>, dtau: f64, dkappa: f64| {
            let mut al = max_step(cones, &s, ds).min(max_step(cones, &z, dz));
            if dtau < 0.0 {
                al = al.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                al = al.min(-kappa / dkappa);
            }
            al
        };

        // predictor
        let ds_aff_rhs = -circ(cones, &lam, &lam);
        let Some((_, _, dz_a, ds_a, dt_a, dk_a)) = step(0.0, &ds_aff_rhs, -tau * kappa) else { break };
        let alpha_aff = alpha_for(&dz_a, &ds_a, dt_a, dk_a).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // corrector
        let corr = circ(cones, &scaling.winv(cones, &ds_a), &scaling.w(cones, &dz_a));
        let ds_rhs = &ds_aff_rhs - corr + &e * (sigma * mu);
        let dk_rhs = -tau * kappa - dt_a * dk_a + sigma * mu;
        let Some((dx, dy, dz, ds, dtau, dkappa)) = step(sigma, &ds_rhs, dk_rhs) else { break };
        let alpha = (STEP_FRACTION * alpha_for(&dz, &ds, dtau, dkappa)).min(1.0);
        if !(alpha > 1e-12) || !alpha.is_finite() {
            break;
        }

        x += dx * alpha;
        y += dy * alpha;
        z += dz * alpha;
        s += ds * alpha;
        tau += dtau * alpha;
        kappa += dkappa * alpha;
        if !interior(cones, &s) || !interior(cones, &z) || !(tau > 0.0) || !(kappa > 0.0) {
            break;
        }
    }

    // Out of iterations or progress. Near-infeasible programs lose accuracy
    // as tau goes to zero before the certificate reaches full precision, so
    // a certificate at reduced accuracy still settles the status.
    match best {
        Some((_, xo)) => (SolveStatus::NumericalFailure, xo, opts.max_iter),
        None if best_cert <= INFEASIBLE_REDUCED => (SolveStatus::Infeasible, &x / tau, opts.max_iter),
        None => (SolveStatus::NumericalFailure, &x / tau, opts.max_iter),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_soc_point(rng: &mut ChaCha8Rng, k: usize) -> DVector<f64> {
        let mut u = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        u[0] = u.rows(1, k - 1).norm() + rng.random_range(0.01..1.0);
        u
    }

    #[test]
    fn nt_scaling_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let cones = Cones { l: 2, soc: vec![(2, 4), (6, 3)], m: 9 };
            let mut s = DVector::zeros(9);
            let mut z = DVector::zeros(9);
            for i in 0..2 {
                s[i] = rng.random_range(0.1..2.0);
                z[i] = rng.random_range(0.1..2.0);
            }
            s.rows_mut(2, 4).copy_from(&random_soc_point(&mut rng, 4));
            z.rows_mut(2, 4).copy_from(&random_soc_point(&mut rng, 4));
            s.rows_mut(6, 3).copy_from(&random_soc_point(&mut rng, 3));
            z.rows_mut(6, 3).copy_from(&random_soc_point(&mut rng, 3));
            let w = Scaling::new(&cones, &s, &z).unwrap();
            let lz = w.w(&cones, &z);
            let ls = w.winv(&cones, &s);
            assert!((&lz - &ls).amax() < 1e-10 * lz.amax().max(1.0));
            let v = DVector::from_fn(9, |_, _| rng.random_range(-1.0..1.0));
            assert!((w.winv(&cones, &w.w(&cones, &v)) - &v).amax() < 1e-10);
        }
    }

    #[test]
    fn inverse_jordan_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cones = Cones { l: 1, soc: vec![(1, 5)], m: 6 };
        for _ in 0..100 {
            let mut lam = DVector::zeros(6);
            lam[0] = rng.random_range(0.1..2.0);
            lam.rows_mut(1, 5).copy_from(&random_soc_point(&mut rng, 5));
            let r = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let x = inv_circ(&cones, &lam, &r);
            assert!((circ(&cones, &lam, &x) - r).amax() < 1e-9);
        }
    }

    #[test]
    fn step_to_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cones = Cones { l: 0, soc: vec![(0, 4)], m: 4 };
        for _ in 0..200 {
            let u = random_soc_point(&mut rng, 4);
            let d = DVector::from_fn(4, |_, _| rng.random_range(-3.0..3.0));
            let a = max_step(&cones, &u, &d);
            if a.is_finite() {
                let at = &u + &d * a;
                assert!(soc_res(at.as_slice()).abs() < 1e-8 * at.norm_squared().max(1.0));
                assert!(interior(&cones, &(&u + &d * (0.999 * a))));
            } else {
                assert!(interior(&cones, &(&u + &d * 1e6)));
            }
        }
    }
}
