//! Tie-aware ranking metrics over Hamming tie groups.
//!
//! The closed forms here average the classical metric over every ordering of
//! tied items without enumerating them. [`oracle`] does the enumeration and
//! serves as the reference in tests.

mod histogram;
pub mod oracle;
mod report;
mod tie_aware;
mod tiebreak;

pub use histogram::{build_tie_histogram, TieHistogram};
pub use oracle::{permutation_average_ap, permutation_average_oracle, ORACLE_LIMIT};
pub use report::MetricReport;
pub(crate) use tie_aware::{ap_counted, dcg_counted};
pub use tie_aware::{
    ap_tie_aware, ap_tie_aware_at_k, dcg_tie_aware, discount, ideal_dcg, ndcg_tie_aware,
    tie_aware_value, OpCount,
};
pub use tiebreak::{
    classical_ap, classical_dcg, classical_ndcg, classical_value, flatten_ranking,
    metric_with_tiebreak, tiebreak_range, RankMetric, TieBreak, TiebreakRange,
};
