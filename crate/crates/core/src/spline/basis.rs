//! Cox–de Boor evaluation of the B-spline basis.

use super::KnotVector;
use crate::error::{Error, Result};

/// Evaluates `lambda_{i,degree}(t)` for every `i` in `0..v - degree`.
///
/// Works for any `degree <= d` over the same knot vector, which is what the
/// derivative representation `P B_r Lambda_{d-r}(t)` needs. Terms of the form
/// `0/0` arising from repeated knots are taken as zero. At `t = tau_v` the
/// last nonempty span is treated as closed.
pub fn basis_eval(knots: &KnotVector, degree: usize, t: f64) -> Result<Vec<f64>> {
    if degree > knots.degree() {
        return Err(Error::OrderTooHigh { order: degree, degree: knots.degree() });
    }
    let span = knots.span_index(t)?;
    let tau = knots.knots();
    let v = knots.v();

    let mut vals = vec![0.0; v];
    vals[span] = 1.0;
    for q in 1..=degree {
        let len = v - q;
        // only lambda_{span-q..=span, q} can be nonzero
        let lo = span.saturating_sub(q);
        let mut next = vec![0.0; len];
        for i in lo..=span.min(len - 1) {
            let mut acc = 0.0;
            let den_left = tau[i + q] - tau[i];
            if den_left > 0.0 && vals[i] != 0.0 {
                acc += (t - tau[i]) / den_left * vals[i];
            }
            let den_right = tau[i + q + 1] - tau[i + 1];
            if den_right > 0.0 && vals[i + 1] != 0.0 {
                acc += (tau[i + q + 1] - t) / den_right * vals[i + 1];
            }
            next[i] = acc;
        }
        vals = next;
    }
    Ok(vals)
}
