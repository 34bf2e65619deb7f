//! Classical (tie-unaware) metrics under explicit tie-breaking strategies.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affinity::{gain, AffinityLevels};
use crate::error::{Result, TalrError};
use crate::hamming::TieGroupedRanking;
use crate::scalar::MetricField;

use super::tie_aware::{discount, ideal_dcg, tie_aware_value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankMetric {
    Ap,
    Dcg,
    Ndcg,
}

/// How items inside a tie are ordered before applying a classical metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieBreak {
    /// Higher affinity first.
    Optimistic,
    /// Lower affinity first.
    Pessimistic,
    /// Seeded shuffle within each tie.
    Random(u64),
    /// Ascending original index.
    ByIndex,
}

/// Linearizes the tie groups under `strategy`.
pub fn flatten_ranking(
    ranking: &TieGroupedRanking,
    affinities: &AffinityLevels,
    strategy: TieBreak,
) -> Vec<usize> {
    let mut rng = match strategy {
        TieBreak::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let mut out = Vec::with_capacity(ranking.total());
    for group in ranking.groups() {
        let start = out.len();
        out.extend_from_slice(group);
        let tie = &mut out[start..];
        match strategy {
            TieBreak::Optimistic => tie.sort_by_key(|&i| std::cmp::Reverse(affinities.value(i))),
            TieBreak::Pessimistic => tie.sort_by_key(|&i| affinities.value(i)),
            TieBreak::Random(_) => tie.shuffle(rng.as_mut().unwrap()),
            TieBreak::ByIndex => {}
        }
    }
    out
}

/// AP of a linear ranking, truncated at `cutoff` and normalized by the total
/// number of relevant items.
pub fn classical_ap<T: MetricField>(
    order: &[usize],
    affinities: &AffinityLevels,
    cutoff: Option<usize>,
) -> Result<T> {
    let n_plus = affinities.num_relevant();
    if n_plus == 0 {
        return Err(TalrError::UndefinedMetric("no relevant items (N+ = 0)"));
    }
    let k = cutoff.unwrap_or(order.len()).min(order.len());
    let mut hits = 0u64;
    let mut acc = T::zero();
    for (pos, &i) in order[..k].iter().enumerate() {
        if affinities.is_relevant(i) {
            hits += 1;
            acc = acc + T::from_count(hits) / T::from_count(pos as u64 + 1);
        }
    }
    Ok(acc / T::from_count(n_plus as u64))
}

pub fn classical_dcg(order: &[usize], affinities: &AffinityLevels, cutoff: Option<usize>) -> f64 {
    let k = cutoff.unwrap_or(order.len()).min(order.len());
    order[..k]
        .iter()
        .enumerate()
        .map(|(pos, &i)| gain(affinities.value(i)) * discount(pos as u64 + 1))
        .sum()
}

pub fn classical_ndcg(
    order: &[usize],
    affinities: &AffinityLevels,
    cutoff: Option<usize>,
) -> Result<f64> {
    let ideal = ideal_dcg(affinities, cutoff)?;
    if ideal <= 0.0 {
        return Err(TalrError::UndefinedMetric("all gains are zero"));
    }
    Ok(classical_dcg(order, affinities, cutoff) / ideal)
}

pub fn classical_value(
    order: &[usize],
    affinities: &AffinityLevels,
    metric: RankMetric,
    cutoff: Option<usize>,
) -> Result<f64> {
    match metric {
        RankMetric::Ap => classical_ap(order, affinities, cutoff),
        RankMetric::Dcg => Ok(classical_dcg(order, affinities, cutoff)),
        RankMetric::Ndcg => classical_ndcg(order, affinities, cutoff),
    }
}

/// Classical metric after breaking ties with `strategy`.
pub fn metric_with_tiebreak(
    ranking: &TieGroupedRanking,
    affinities: &AffinityLevels,
    metric: RankMetric,
    strategy: TieBreak,
) -> Result<f64> {
    if ranking.total() != affinities.len() {
        return Err(TalrError::Dimension(
            "ranking and affinities differ in size".into(),
        ));
    }
    let order = flatten_ranking(ranking, affinities, strategy);
    classical_value(&order, affinities, metric, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiebreakRange {
    pub min: f64,
    pub max: f64,
    pub tie_aware: f64,
}

impl TiebreakRange {
    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

/// Extremes over all within-tie orderings together with the tie-aware value.
///
/// AP and (N)DCG only improve when a more relevant item moves ahead inside a
/// tie, so the pessimistic and optimistic orderings attain the extremes.
pub fn tiebreak_range(
    ranking: &TieGroupedRanking,
    affinities: &AffinityLevels,
    metric: RankMetric,
) -> Result<TiebreakRange> {
    Ok(TiebreakRange {
        min: metric_with_tiebreak(ranking, affinities, metric, TieBreak::Pessimistic)?,
        max: metric_with_tiebreak(ranking, affinities, metric, TieBreak::Optimistic)?,
        tie_aware: tie_aware_value(ranking, affinities, metric, None)?,
    })
}
