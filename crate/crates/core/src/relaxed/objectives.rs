//! The four relaxed objectives and their per-bin partial derivatives.
//!
//! | name    | form                                                         |
//! |---------|--------------------------------------------------------------|
//! | `AP_r`  | tie-aware AP with the harmonic sum replaced by a log         |
//! | `DCG_r` | tie-aware DCG with the discount sum replaced by `∫ dt/ln t`  |
//! | `AP_s`  | AP with each tie's sum replaced by its midpoint summand      |
//! | `DCG_s` | Jensen lower bound of tie-aware DCG                          |
//!
//! AP objectives pool every level `v > 0` as relevant; DCG objectives use the
//! gains `2^v - 1`.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TalrError};
use crate::scalar::Real;

use super::li::li_difference;
use super::soft_hist::SoftHistogramSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "AP_s")]
    ApSimplified,
    #[serde(rename = "DCG_s")]
    DcgSimplified,
    #[serde(rename = "AP_r")]
    ApRelaxed,
    #[serde(rename = "DCG_r")]
    DcgRelaxed,
}

impl Objective {
    pub const ALL: [Objective; 4] = [
        Objective::ApSimplified,
        Objective::DcgSimplified,
        Objective::ApRelaxed,
        Objective::DcgRelaxed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::ApSimplified => "AP_s",
            Objective::DcgSimplified => "DCG_s",
            Objective::ApRelaxed => "AP_r",
            Objective::DcgRelaxed => "DCG_r",
        }
    }

    pub fn is_ap(self) -> bool {
        matches!(self, Objective::ApSimplified | Objective::ApRelaxed)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = TalrError;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| TalrError::Config {
                field: "objective",
                reason: format!("unknown objective `{s}` (expected AP_s, DCG_s, AP_r or DCG_r)"),
            })
    }
}

/// Which logarithm limits `AP_r` and `DCG_r` use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogForm {
    /// `ln((C_d + 1/2) / (C_{d-1} + 1/2))` for `AP_r`, `li` limits shifted by
    /// `1/2` for `DCG_r`. Finite everywhere.
    Shifted,
    /// Unshifted limits: `ln(C_d / max(C_{d-1}, 1))` and `li(C + 1)`. `DCG_r`
    /// then fails on bins with `C_{d-1} < ratio_eps`.
    Unshifted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxOptions {
    pub log_form: LogForm,
    /// Below `c_d < 1 + ratio_eps` the `AP_r` tie ratio `(c⁺-1)/(c-1)` is
    /// replaced by `c⁺/c` and the harmonic sum by its exact singleton value.
    pub ratio_eps: f64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            log_form: LogForm::Shifted,
            ratio_eps: 1e-6,
        }
    }
}

/// Per-query constants: `N⁺` for AP objectives and the DCG normalizer
/// (the ideal DCG when training for NDCG, 1 for raw DCG).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryTarget {
    pub n_plus: f64,
    pub dcg_norm: f64,
}

impl QueryTarget {
    pub fn ap(n_plus: f64) -> Self {
        Self {
            n_plus,
            dcg_norm: 1.0,
        }
    }

    pub fn dcg(dcg_norm: f64) -> Self {
        Self {
            n_plus: 0.0,
            dcg_norm,
        }
    }
}

/// Per-bin values `O_d` with `zeta[d][v] = ∂O_d/∂c_{d,v}` and
/// `theta[d][v] = ∂O_d/∂C_{d-1,v}`; the latter equals `∂O_d/∂c_{l,v}` for
/// every `l < d`. Row-major `bins x |V|`.
#[derive(Debug, Clone, PartialEq)]
pub struct TermPartials<T> {
    pub num_levels: usize,
    pub values: Vec<T>,
    pub zeta: Vec<T>,
    pub theta: Vec<T>,
}

impl<T: Real> TermPartials<T> {
    pub fn total(&self) -> T {
        self.values.iter().copied().sum()
    }

    pub fn num_bins(&self) -> usize {
        self.values.len()
    }
}

/// `(value, ∂/∂c⁺, ∂/∂c, ∂/∂C⁺_{d-1}, ∂/∂C_{d-1})` of one AP term, before
/// division by `N⁺`.
type ApParts<T> = [T; 5];

fn ap_simplified_parts<T: Real>(cp: T, c: T, p: T, q: T) -> ApParts<T> {
    let two = T::of(2.0);
    let num = two * p + cp + T::one();
    let den = two * q + c + T::one();
    let den2 = den * den;
    [
        cp * num / den,
        (num + cp) / den,
        -cp * num / den2,
        two * cp / den,
        -two * cp * num / den2,
    ]
}

fn ap_relaxed_parts<T: Real>(cp: T, c: T, p: T, q: T, opts: &RelaxOptions) -> ApParts<T> {
    let zero = T::zero();
    let one = T::one();
    if c < T::of(1e-12) {
        // an empty bin: the term vanishes, and its one-sided derivative along
        // added relevant mass is the precision P/Q reached so far
        let d_cp = if q > T::of(1e-12) { p / q } else { one };
        return [zero, d_cp, zero, zero, zero];
    }
    if c < one + T::of(opts.ratio_eps) {
        // singleton regime: ratio c⁺/c and the exact harmonic term c / C_d
        let qc = q + c;
        let qc2 = qc * qc;
        let value = cp * cp / c + cp * (p + one) / qc - cp * cp * (q + one) / (c * qc);
        let d_cp = T::of(2.0) * cp / c + (p + one) / qc - T::of(2.0) * cp * (q + one) / (c * qc);
        let d_c = -cp * cp / (c * c) - cp * (p + one) / qc2
            + cp * cp * (q + one) * (T::of(2.0) * c + q) / (c * c * qc2);
        let d_p = cp / qc;
        let d_q = -cp * (p + one) / qc2 - cp * cp * (c - one) / (c * qc2);
        return [value, d_cp, d_c, d_p, d_q];
    }
    let s = c - one;
    let r = (cp - one) / s;
    let g = cp / c;
    let k = p + one - r * (q + one);
    let (l, dl_dc, dl_dq) = match opts.log_form {
        LogForm::Shifted => {
            let half = T::of(0.5);
            let (top, bottom) = (q + c + half, q + half);
            (
                (top / bottom).ln(),
                top.recip(),
                top.recip() - bottom.recip(),
            )
        }
        LogForm::Unshifted => {
            let top = q + c;
            let (bottom, db) = if q > one { (q, q.recip()) } else { (one, zero) };
            ((top / bottom).ln(), top.recip(), top.recip() - db)
        }
    };
    let dk_dcp = -(q + one) / s;
    let dk_dc = (q + one) * r / s;
    let value = cp * r + g * k * l;
    let d_cp = r + cp / s + k * l / c + g * dk_dcp * l;
    let d_c = -cp * r / s - g / c * k * l + g * dk_dc * l + g * k * dl_dc;
    let d_p = g * l;
    let d_q = -g * r * l + g * k * dl_dq;
    [value, d_cp, d_c, d_p, d_q]
}

/// `(value, ∂/∂W, ∂/∂c, ∂/∂C_{d-1})` of one DCG term with gain mass `W`.
type DcgParts<T> = [T; 4];

fn dcg_simplified_parts<T: Real>(w: T, c: T, q: T) -> DcgParts<T> {
    let ln2 = T::of(LN_2);
    let y = q + T::of(0.5) * c + T::of(1.5);
    let lam = y.ln();
    let d_q = -ln2 * w / (lam * lam * y);
    [ln2 * w / lam, ln2 / lam, T::of(0.5) * d_q, d_q]
}

fn dcg_relaxed_parts<T: Real>(w: T, c: T, q: T, opts: &RelaxOptions) -> Result<DcgParts<T>> {
    let ln2 = LN_2;
    let (w, c, q) = (w.f64(), c.f64(), q.f64());
    let shift = match opts.log_form {
        LogForm::Shifted => 0.5,
        LogForm::Unshifted => {
            if q < opts.ratio_eps {
                return Err(TalrError::Numeric(
                    "unshifted DCG_r needs C_{d-1} >= eps (li diverges at 1)".into(),
                ));
            }
            0.0
        }
    };
    let lo = q + 1.0 + shift;
    let up = lo + c;
    let parts = if c < 1e-6 {
        // second-order expansion of (W/c) ∫_lo^{lo+c} dt / ln t around c = 0
        let ll = lo.ln();
        let f0 = 1.0 / ll;
        let f1 = -1.0 / (lo * ll * ll);
        let f2 = (ll + 2.0) / (lo * lo * ll * ll * ll);
        let base = f0 + 0.5 * c * f1;
        [
            ln2 * w * base,
            ln2 * base,
            ln2 * w * 0.5 * f1,
            ln2 * w * (f1 + 0.5 * c * f2),
        ]
    } else {
        let integral = li_difference(lo, up)?;
        let g = w / c;
        [
            ln2 * g * integral,
            ln2 * integral / c,
            ln2 * (-g * integral / c + g / up.ln()),
            ln2 * g * (1.0 / up.ln() - 1.0 / lo.ln()),
        ]
    };
    Ok(parts.map(T::of))
}

/// Values and partials of every per-bin term of `objective`.
pub fn objective_terms<T: Real>(
    objective: Objective,
    s: &SoftHistogramSet<T>,
    target: QueryTarget,
    opts: &RelaxOptions,
) -> Result<TermPartials<T>> {
    let levels = s.levels();
    let nv = levels.len();
    let bins = s.num_bins();
    let mut values = vec![T::zero(); bins];
    let mut zeta = vec![T::zero(); bins * nv];
    let mut theta = vec![T::zero(); bins * nv];

    if objective.is_ap() {
        if !(target.n_plus > 0.0) {
            return Err(TalrError::InvalidInput(format!(
                "AP objectives need N+ > 0, got {}",
                target.n_plus
            )));
        }
        let inv = T::of(target.n_plus.recip());
        let positive: Vec<bool> = (0..nv).map(|v| levels.is_positive(v)).collect();
        let (mut p, mut q) = (T::zero(), T::zero());
        for d in 0..bins {
            let bin = s.bin(d);
            let c: T = bin.iter().copied().sum();
            let cp: T = bin
                .iter()
                .zip(&positive)
                .filter(|(_, &pos)| pos)
                .map(|(x, _)| *x)
                .sum();
            let [value, d_cp, d_c, d_p, d_q] = match objective {
                Objective::ApSimplified => ap_simplified_parts(cp, c, p, q),
                _ => ap_relaxed_parts(cp, c, p, q, opts),
            };
            values[d] = value * inv;
            for v in 0..nv {
                let pos = if positive[v] { T::one() } else { T::zero() };
                zeta[d * nv + v] = (pos * d_cp + d_c) * inv;
                theta[d * nv + v] = (pos * d_p + d_q) * inv;
            }
            p += cp;
            q += c;
        }
    } else {
        if !(target.dcg_norm > 0.0) {
            return Err(TalrError::InvalidInput(format!(
                "DCG normalizer must be positive, got {}",
                target.dcg_norm
            )));
        }
        let inv = T::of(target.dcg_norm.recip());
        let gains: Vec<T> = levels.gains().into_iter().map(T::of).collect();
        let mut q = T::zero();
        for d in 0..bins {
            let bin = s.bin(d);
            let c: T = bin.iter().copied().sum();
            let w: T = bin.iter().zip(&gains).map(|(x, g)| *x * *g).sum();
            let [value, d_w, d_c, d_q] = match objective {
                Objective::DcgSimplified => dcg_simplified_parts(w, c, q),
                _ => dcg_relaxed_parts(w, c, q, opts)?,
            };
            values[d] = value * inv;
            for v in 0..nv {
                zeta[d * nv + v] = (gains[v] * d_w + d_c) * inv;
                theta[d * nv + v] = d_q * inv;
            }
            q += c;
        }
    }
    Ok(TermPartials {
        num_levels: nv,
        values,
        zeta,
        theta,
    })
}

/// Objective value for one query.
pub fn objective_value<T: Real>(
    objective: Objective,
    s: &SoftHistogramSet<T>,
    target: QueryTarget,
    opts: &RelaxOptions,
) -> Result<T> {
    Ok(objective_terms(objective, s, target, opts)?.total())
}

pub fn ap_relaxed<T: Real>(s: &SoftHistogramSet<T>, n_plus: T, opts: &RelaxOptions) -> Result<T> {
    objective_value(Objective::ApRelaxed, s, QueryTarget::ap(n_plus.f64()), opts)
}

/// Unnormalized relaxed DCG.
pub fn dcg_relaxed<T: Real>(s: &SoftHistogramSet<T>, opts: &RelaxOptions) -> Result<T> {
    objective_value(Objective::DcgRelaxed, s, QueryTarget::dcg(1.0), opts)
}

pub fn ap_simplified<T: Real>(s: &SoftHistogramSet<T>, n_plus: T) -> Result<T> {
    objective_value(
        Objective::ApSimplified,
        s,
        QueryTarget::ap(n_plus.f64()),
        &RelaxOptions::default(),
    )
}

/// Unnormalized simplified DCG (a lower bound of tie-aware DCG on hard
/// counts).
pub fn dcg_simplified<T: Real>(s: &SoftHistogramSet<T>) -> Result<T> {
    objective_value(
        Objective::DcgSimplified,
        s,
        QueryTarget::dcg(1.0),
        &RelaxOptions::default(),
    )
}

/// `|sum_{t=N+1}^{N+n} 1/t - ln((N+n)/N)|`, the error of replacing a tie's
/// harmonic sum by a logarithm.
pub fn harmonic_log_gap(before: u64, n: u64) -> f64 {
    let harmonic: f64 = (before + 1..=before + n).map(|t| 1.0 / t as f64).sum();
    (harmonic - ((before + n) as f64 / before as f64).ln()).abs()
}
