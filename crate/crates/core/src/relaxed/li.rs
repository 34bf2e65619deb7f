//! `∫ dt / ln t` by adaptive Simpson quadrature.

use crate::error::{Result, TalrError};

const LI_TOL: f64 = 1e-10;
const LI_MAX_DEPTH: u32 = 40;

#[inline]
fn inv_ln(t: f64) -> f64 {
    1.0 / t.ln()
}

fn simpson(a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = inv_ln(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adapt(
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let (lm, flm, left) = simpson(a, fa, m, fm);
    let (rm, frm, right) = simpson(m, fm, b, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(TalrError::Numeric(format!(
            "log-integral quadrature did not converge on [{a}, {b}]"
        )));
    }
    Ok(adapt(a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)?
        + adapt(m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)?)
}

/// `∫_lo^hi dt / ln t` for `1 < lo`, to absolute tolerance `tol`.
pub fn log_integral_quadrature(lo: f64, hi: f64, tol: f64, max_depth: u32) -> Result<f64> {
    if !(lo > 1.0) || !(hi > 1.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(TalrError::Numeric(format!(
            "log-integral limits [{lo}, {hi}] must lie in (1, inf)"
        )));
    }
    if lo == hi {
        return Ok(0.0);
    }
    if hi < lo {
        return Ok(-log_integral_quadrature(hi, lo, tol, max_depth)?);
    }
    let (fa, fb) = (inv_ln(lo), inv_ln(hi));
    let (m, fm, whole) = simpson(lo, fa, hi, fb);
    adapt(lo, fa, hi, fb, m, fm, whole, tol, max_depth)
}

/// `li(hi) - li(lo)` with the default tolerance `1e-10` and depth 40.
pub fn li_difference(lo: f64, hi: f64) -> Result<f64> {
    log_integral_quadrature(lo, hi, LI_TOL, LI_MAX_DEPTH)
}
