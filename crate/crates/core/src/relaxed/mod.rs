//! Continuous relaxation of the tie-aware metrics.
//!
//! Codes are relaxed with `tanh`, integer distance histograms with
//! triangular soft binning, and the finite rank sums inside AP/DCG with
//! integrals. Each objective is a sum of per-bin terms `O_d` that depend only
//! on the bin's own soft counts `c_{d,v}` and on the cumulative counts
//! `C_{d-1,v}` below it; [`objective_terms`] returns every term's value with
//! its partials with respect to both.

mod codes;
mod li;
mod objectives;
mod soft_hist;

pub use codes::{relax_codes, relaxed_distance, RelaxedCodes};
pub use li::{li_difference, log_integral_quadrature};
pub use objectives::{
    ap_relaxed, ap_simplified, dcg_relaxed, dcg_simplified, harmonic_log_gap, objective_terms,
    objective_value, LogForm, Objective, QueryTarget, RelaxOptions, TermPartials,
};
pub use soft_hist::{
    build_soft_histograms, soft_bin, soft_bin_slope, soft_histograms_from_distances,
    SoftHistogramSet,
};
