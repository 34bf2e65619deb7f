//! Closed-form tie-aware AP, DCG and NDCG.

use crate::affinity::AffinityLevels;
use crate::error::{Result, TalrError};
use crate::hamming::{sort_gains_desc, TieGroupedRanking};
use crate::scalar::MetricField;

use super::histogram::{build_tie_histogram, TieHistogram};
use super::tiebreak::RankMetric;

/// Logarithmic discount `1 / log2(t + 1)` of rank `t >= 1`.
#[inline]
pub fn discount(t: u64) -> f64 {
    1.0 / ((t + 1) as f64).log2()
}

/// Counts rank positions visited by the metric loops.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCount {
    pub touches: u64,
}

fn ap_sum<T: MetricField>(h: &TieHistogram, k: u64, ops: &mut OpCount) -> Result<T> {
    let n_plus = h.total_positives();
    if n_plus == 0 {
        return Err(TalrError::UndefinedMetric("no relevant items (N+ = 0)"));
    }
    let one = T::one();
    let mut acc = T::zero();
    for d in 0..h.num_bins() {
        let n = h.size(d);
        let np = h.positives(d);
        let prev = h.before(d);
        if prev >= k {
            break;
        }
        if n == 0 || np == 0 {
            continue;
        }
        // (n+ - 1)/(n - 1) := 0 for a singleton tie
        let ratio = if n > 1 {
            T::from_count(np - 1) / T::from_count(n - 1)
        } else {
            T::zero()
        };
        // summand = ratio + (N+_{d-1} + 1 - ratio (N_{d-1} + 1)) / t
        let constant =
            T::from_count(h.positives_before(d) + 1) - ratio.clone() * T::from_count(prev + 1);
        let last = h.cum_size(d).min(k);
        let mut harmonic = T::zero();
        for t in prev + 1..=last {
            harmonic = harmonic + one.clone() / T::from_count(t);
            ops.touches += 1;
        }
        let inner = ratio * T::from_count(last - prev) + constant * harmonic;
        acc = acc + T::from_count(np) * inner / T::from_count(n);
    }
    Ok(acc / T::from_count(n_plus))
}

/// Tie-aware AP over binary relevance (`v > 0`).
///
/// Returns [`TalrError::UndefinedMetric`] when the query has no relevant item.
pub fn ap_tie_aware<T: MetricField>(h: &TieHistogram) -> Result<T> {
    ap_sum(h, h.total(), &mut OpCount::default())
}

/// Tie-aware AP truncated at rank `k`, still normalized by `N^+`.
pub fn ap_tie_aware_at_k<T: MetricField>(h: &TieHistogram, k: usize) -> Result<T> {
    let total = h.total() as usize;
    if k == 0 || k > total {
        return Err(TalrError::CutoffOutOfRange { k, max: total });
    }
    ap_sum(h, k as u64, &mut OpCount::default())
}

pub(crate) fn ap_counted(h: &TieHistogram, k: u64, ops: &mut OpCount) -> Result<f64> {
    ap_sum(h, k, ops)
}

pub(crate) fn dcg_counted(h: &TieHistogram, cutoff: Option<usize>, ops: &mut OpCount) -> f64 {
    let k = cutoff.map_or(u64::MAX, |k| k as u64);
    let mut acc = 0.0;
    for d in 0..h.num_bins() {
        let n = h.size(d);
        let prev = h.before(d);
        if prev >= k {
            break;
        }
        if n == 0 {
            continue;
        }
        let mass = h.gain_mass(d);
        if mass == 0.0 {
            continue;
        }
        let last = h.cum_size(d).min(k);
        let mut disc = 0.0;
        for t in prev + 1..=last {
            disc += discount(t);
            ops.touches += 1;
        }
        acc += mass / n as f64 * disc;
    }
    acc
}

/// Tie-aware DCG, optionally truncated at `cutoff`; the tie straddling the
/// cutoff keeps its full average gain.
pub fn dcg_tie_aware(h: &TieHistogram, cutoff: Option<usize>) -> f64 {
    dcg_counted(h, cutoff, &mut OpCount::default())
}

/// DCG of the ideal ordering, from gains sorted by counting.
pub fn ideal_dcg(affinities: &AffinityLevels, cutoff: Option<usize>) -> Result<f64> {
    let gains = sort_gains_desc(affinities.values(), affinities.levels())?;
    let k = cutoff.unwrap_or(usize::MAX);
    Ok(gains
        .iter()
        .take(k)
        .enumerate()
        .map(|(t, g)| g * discount(t as u64 + 1))
        .sum())
}

/// Tie-aware NDCG. Ties do not affect the normalizer.
pub fn ndcg_tie_aware(
    h: &TieHistogram,
    affinities: &AffinityLevels,
    cutoff: Option<usize>,
) -> Result<f64> {
    let ideal = ideal_dcg(affinities, cutoff)?;
    if ideal <= 0.0 {
        return Err(TalrError::UndefinedMetric("all gains are zero"));
    }
    Ok(dcg_tie_aware(h, cutoff) / ideal)
}

/// Tie-aware value of `metric` for a ranked query.
pub fn tie_aware_value(
    ranking: &TieGroupedRanking,
    affinities: &AffinityLevels,
    metric: RankMetric,
    cutoff: Option<usize>,
) -> Result<f64> {
    let h = build_tie_histogram(ranking, affinities)?;
    match metric {
        RankMetric::Ap => match cutoff {
            Some(k) => ap_tie_aware_at_k(&h, k),
            None => ap_tie_aware(&h),
        },
        RankMetric::Dcg => Ok(dcg_tie_aware(&h, cutoff)),
        RankMetric::Ndcg => ndcg_tie_aware(&h, affinities, cutoff),
    }
}
