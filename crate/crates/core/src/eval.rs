//! Hamming ranking evaluation of query codes against a database codebook.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::AffinityLevels;
use crate::error::{Result, TalrError};
use crate::hamming::{BinaryCodebook, TieGroupedRanking};
use crate::metrics::{
    ap_counted, build_tie_histogram, dcg_counted, ideal_dcg, metric_with_tiebreak, tiebreak_range,
    MetricReport, OpCount, RankMetric, TieBreak,
};

/// Affinities of the whole database to query `q`.
pub type AffinityRows<'a> = dyn Fn(usize) -> Result<AffinityLevels> + Sync + 'a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub ap: MetricReport,
    pub ap_at_k: Option<MetricReport>,
    pub dcg: MetricReport,
    pub ndcg: MetricReport,
    /// Rank positions visited by the metric loops, summed over queries.
    pub rank_touches: u64,
}

fn check_widths(queries: &BinaryCodebook, database: &BinaryCodebook) -> Result<()> {
    if queries.num_bits() != database.num_bits() {
        return Err(TalrError::Dimension(format!(
            "query codes have {} bits, database codes {}",
            queries.num_bits(),
            database.num_bits()
        )));
    }
    if database.num_items() == 0 {
        return Err(TalrError::InvalidInput("empty database".into()));
    }
    Ok(())
}

struct QueryEval {
    ap: Option<f64>,
    ap_k: Option<f64>,
    dcg: f64,
    ndcg: Option<f64>,
    touches: u64,
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(TalrError::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Tie-aware AP, AP@k, DCG and NDCG of every query. `k` is clamped to the
/// database size.
pub fn evaluate(
    queries: &BinaryCodebook,
    database: &BinaryCodebook,
    affinities: &AffinityRows<'_>,
    k: Option<usize>,
) -> Result<EvalResult> {
    check_widths(queries, database)?;
    let n = database.num_items();
    let k = k.map(|k| k.clamp(1, n));
    let rows = (0..queries.num_items())
        .into_par_iter()
        .map(|q| -> Result<QueryEval> {
            let aff = affinities(q)?;
            let dist = database.distances(queries.row(q))?;
            let ranking = TieGroupedRanking::from_distances(&dist, database.num_bits())?;
            let h = build_tie_histogram(&ranking, &aff)?;
            let mut ops = OpCount::default();
            let ap = defined(ap_counted(&h, n as u64, &mut ops))?;
            let ap_k = match k {
                Some(k) => defined(ap_counted(&h, k as u64, &mut ops))?,
                None => None,
            };
            let dcg = dcg_counted(&h, None, &mut ops);
            let ideal = ideal_dcg(&aff, None)?;
            Ok(QueryEval {
                ap,
                ap_k,
                dcg,
                ndcg: (ideal > 0.0).then(|| dcg / ideal),
                touches: ops.touches,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalResult {
        ap: MetricReport::from_values("AP_T", None, rows.iter().map(|r| r.ap).collect()),
        ap_at_k: k.map(|k| {
            MetricReport::from_values("AP_T@k", Some(k), rows.iter().map(|r| r.ap_k).collect())
        }),
        dcg: MetricReport::from_values("DCG_T", None, rows.iter().map(|r| Some(r.dcg)).collect()),
        ndcg: MetricReport::from_values("NDCG_T", None, rows.iter().map(|r| r.ndcg).collect()),
        rank_touches: rows.iter().map(|r| r.touches).sum(),
    })
}

/// Metric of one query under each tie-breaking strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub bits: usize,
    pub query: usize,
    pub pessimistic: f64,
    pub optimistic: f64,
    pub random: f64,
    pub tie_aware: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub bits: usize,
    pub metric: RankMetric,
    pub num_queries: usize,
    pub num_undefined: usize,
    pub mean_pessimistic: f64,
    pub mean_optimistic: f64,
    pub mean_random: f64,
    pub mean_tie_aware: f64,
    /// Mean of `optimistic - pessimistic` per query.
    pub mean_range: f64,
    /// Fraction of queries whose tie-aware value lies in
    /// `[pessimistic, optimistic]`.
    pub fraction_within: f64,
}

/// Tie-breaking audit of one codebook pair. Queries with an undefined
/// metric are counted and skipped.
pub fn tiebreak_audit(
    queries: &BinaryCodebook,
    database: &BinaryCodebook,
    affinities: &AffinityRows<'_>,
    metric: RankMetric,
    seed: u64,
) -> Result<(Vec<AuditRow>, AuditSummary)> {
    check_widths(queries, database)?;
    let bits = database.num_bits();
    let rows = (0..queries.num_items())
        .into_par_iter()
        .map(|q| -> Result<Option<AuditRow>> {
            let aff = affinities(q)?;
            let dist = database.distances(queries.row(q))?;
            let ranking = TieGroupedRanking::from_distances(&dist, bits)?;
            let range = match tiebreak_range(&ranking, &aff, metric) {
                Ok(r) => r,
                Err(TalrError::UndefinedMetric(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let random =
                metric_with_tiebreak(&ranking, &aff, metric, TieBreak::Random(seed ^ q as u64))?;
            Ok(Some(AuditRow {
                bits,
                query: q,
                pessimistic: range.min,
                optimistic: range.max,
                random,
                tie_aware: range.tie_aware,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let num_undefined = rows.iter().filter(|r| r.is_none()).count();
    let rows: Vec<AuditRow> = rows.into_iter().flatten().collect();
    let n = rows.len().max(1) as f64;
    let mean = |f: &dyn Fn(&AuditRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let tol = 1e-12;
    let summary = AuditSummary {
        bits,
        metric,
        num_queries: rows.len(),
        num_undefined,
        mean_pessimistic: mean(&|r| r.pessimistic),
        mean_optimistic: mean(&|r| r.optimistic),
        mean_random: mean(&|r| r.random),
        mean_tie_aware: mean(&|r| r.tie_aware),
        mean_range: mean(&|r| r.optimistic - r.pessimistic),
        fraction_within: mean(&|r| {
            f64::from(u8::from(
                r.tie_aware >= r.pessimistic - tol && r.tie_aware <= r.optimistic + tol,
            ))
        }),
    };
    Ok((rows, summary))
}

pub fn audit_rows_csv(rows: &[AuditRow]) -> String {
    let mut out = String::from("bits,query,pessimistic,optimistic,random,tie_aware\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.bits, r.query, r.pessimistic, r.optimistic, r.random, r.tie_aware
        ));
    }
    out
}

pub fn audit_summary_csv(summaries: &[AuditSummary]) -> String {
    let mut out = String::from(
        "bits,num_queries,mean_pessimistic,mean_optimistic,mean_random,mean_tie_aware,mean_range,fraction_within\n",
    );
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.bits,
            s.num_queries,
            s.mean_pessimistic,
            s.mean_optimistic,
            s.mean_random,
            s.mean_tie_aware,
            s.mean_range,
            s.fraction_within
        ));
    }
    out
}
