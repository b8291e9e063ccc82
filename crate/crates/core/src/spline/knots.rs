use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamped, uniform knot vector `tau_0..=tau_v` with `v = N + d + 1`.
///
/// The first `d + 1` knots equal `t0`, the last `d + 1` equal `tf`, and the
/// interior spacing is constant. `N + 1` is the number of control points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKnots", into = "RawKnots")]
pub struct KnotVector {
    tau: Vec<f64>,
    degree: usize,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct RawKnots {
    degree: usize,
    n: usize,
    tau: Vec<f64>,
}

impl From<KnotVector> for RawKnots {
    fn from(k: KnotVector) -> Self {
        RawKnots { degree: k.degree, n: k.n, tau: k.tau }
    }
}

impl TryFrom<RawKnots> for KnotVector {
    type Error = Error;

    fn try_from(raw: RawKnots) -> Result<Self> {
        let k = KnotVector { tau: raw.tau, degree: raw.degree, n: raw.n };
        k.validate()?;
        Ok(k)
    }
}

impl KnotVector {
    /// Builds the clamped uniform knot vector on `[t0, tf]` for `n + 1`
    /// control points of degree `degree`.
    pub fn clamped_uniform(t0: f64, tf: f64, n: usize, degree: usize) -> Result<Self> {
        if !(t0.is_finite() && tf.is_finite()) || tf <= t0 {
            return Err(Error::InvalidArgument(format!("knot range requires tf > t0, got [{t0}, {tf}]")));
        }
        if degree < 1 {
            return Err(Error::InvalidArgument("degree must be at least 1".into()));
        }
        if n < degree {
            return Err(Error::InvalidArgument(format!("need N >= d, got N = {n}, d = {degree}")));
        }
        let v = n + degree + 1;
        let segments = n - degree + 1;
        let h = (tf - t0) / segments as f64;
        let mut tau = Vec::with_capacity(v + 1);
        for i in 0..=v {
            let t = if i <= degree {
                t0
            } else if i > n {
                tf
            } else {
                t0 + (i - degree) as f64 * h
            };
            tau.push(t);
        }
        Ok(KnotVector { tau, degree, n })
    }

    fn validate(&self) -> Result<()> {
        let d = self.degree;
        let v = self.n + d + 1;
        if d < 1 || self.n < d || self.tau.len() != v + 1 {
            return Err(Error::InvalidArgument(format!(
                "knot vector of length {} inconsistent with N = {}, d = {}",
                self.tau.len(),
                self.n,
                d
            )));
        }
        if self.tau.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidArgument("knots must be nondecreasing".into()));
        }
        let (t0, tf) = (self.tau[0], self.tau[v]);
        if self.tau[..=d].iter().any(|&t| t != t0) || self.tau[v - d..].iter().any(|&t| t != tf) {
            return Err(Error::InvalidArgument("knot vector is not clamped".into()));
        }
        let h = self.tau[d + 1] - self.tau[d];
        let scale = (tf - t0).abs().max(1.0);
        if h <= 0.0 || (d..=self.n).any(|i| ((self.tau[i + 1] - self.tau[i]) - h).abs() > 1e-12 * scale) {
            return Err(Error::InvalidArgument("knot vector is not uniform".into()));
        }
        Ok(())
    }

    pub fn knots(&self) -> &[f64] {
        &self.tau
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Index of the last control point (`N`).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_control_points(&self) -> usize {
        self.n + 1
    }

    /// Index of the last knot (`v`).
    pub fn v(&self) -> usize {
        self.tau.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.tau[0]
    }

    pub fn end(&self) -> f64 {
        self.tau[self.v()]
    }

    /// Interior knot spacing.
    pub fn spacing(&self) -> f64 {
        self.tau[self.degree + 1] - self.tau[self.degree]
    }

    /// Indices `i` of the nonempty spans `[tau_i, tau_{i+1})`, i.e. `d..=N`.
    pub fn spans(&self) -> std::ops::RangeInclusive<usize> {
        self.degree..=self.n
    }

    pub fn span_bounds(&self, i: usize) -> (f64, f64) {
        (self.tau[i], self.tau[i + 1])
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(Error::OutOfRange { t, start: self.start(), end: self.end() });
        }
        Ok(())
    }

    /// Span index `i` in `d..=N` with `tau_i <= t < tau_{i+1}`; `t = tau_v`
    /// maps to the last span (closed on the right).
    pub fn span_index(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        let (d, n) = (self.degree, self.n);
        if t >= self.tau[n + 1] {
            return Ok(n);
        }
        // largest i in d..=n with tau_i <= t
        let pos = self.tau[d..=n].partition_point(|&k| k <= t);
        Ok(d + pos - 1)
    }
}
