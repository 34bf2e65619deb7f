//! Brute-force average of a classical metric over every within-tie ordering.

use crate::affinity::AffinityLevels;
use crate::error::{Result, TalrError};
use crate::hamming::TieGroupedRanking;
use crate::scalar::MetricField;

use super::tiebreak::{classical_ap, classical_value, RankMetric};

/// Largest number of orderings the oracle will enumerate.
pub const ORACLE_LIMIT: u128 = 1_000_000;

/// `prod_d n_d!`, saturating.
pub fn ordering_count(ranking: &TieGroupedRanking) -> u128 {
    ranking
        .group_sizes()
        .iter()
        .map(|&n| (1..=n as u128).fold(1u128, |f, k| f.saturating_mul(k)))
        .fold(1u128, |acc, f| acc.saturating_mul(f))
}

fn permute(
    buf: &mut [usize],
    segs: &[(usize, usize)],
    s: usize,
    k: usize,
    visit: &mut dyn FnMut(&[usize]),
) {
    if s == segs.len() {
        visit(buf);
        return;
    }
    if k <= 1 {
        let next = segs.get(s + 1).map_or(0, |seg| seg.1);
        permute(buf, segs, s + 1, next, visit);
        return;
    }
    // Heap's algorithm on the first k entries of segment s
    let start = segs[s].0;
    for i in 0..k - 1 {
        permute(buf, segs, s, k - 1, visit);
        if k % 2 == 0 {
            buf.swap(start + i, start + k - 1);
        } else {
            buf.swap(start, start + k - 1);
        }
    }
    permute(buf, segs, s, k - 1, visit);
}

/// Calls `visit` once per element of the Cartesian product of within-tie
/// permutations.
pub fn for_each_tie_ordering(ranking: &TieGroupedRanking, visit: &mut dyn FnMut(&[usize])) {
    let mut buf = ranking.flattened().to_vec();
    let mut segs = Vec::new();
    let mut start = 0;
    for n in ranking.group_sizes() {
        if n > 1 {
            segs.push((start, n));
        }
        start += n;
    }
    let first = segs.first().map_or(0, |seg| seg.1);
    permute(&mut buf, &segs, 0, first, visit);
}

fn guard(ranking: &TieGroupedRanking) -> Result<u128> {
    let count = ordering_count(ranking);
    if count > ORACLE_LIMIT {
        return Err(TalrError::CombinatorialGuard {
            count,
            limit: ORACLE_LIMIT,
        });
    }
    Ok(count)
}

/// Mean classical metric over all within-tie orderings.
pub fn permutation_average_oracle(
    ranking: &TieGroupedRanking,
    affinities: &AffinityLevels,
    metric: RankMetric,
    cutoff: Option<usize>,
) -> Result<f64> {
    let count = guard(ranking)?;
    let mut sum = 0.0;
    let mut failure = None;
    for_each_tie_ordering(ranking, &mut |order| match classical_value(
        order, affinities, metric, cutoff,
    ) {
        Ok(v) => sum += v,
        Err(e) => failure = Some(e),
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(sum / count as f64),
    }
}

/// Exact-arithmetic AP oracle, for use with rational scalars.
pub fn permutation_average_ap<T: MetricField>(
    ranking: &TieGroupedRanking,
    affinities: &AffinityLevels,
    cutoff: Option<usize>,
) -> Result<T> {
    let count = guard(ranking)?;
    if affinities.num_relevant() == 0 {
        return Err(TalrError::UndefinedMetric("no relevant items (N+ = 0)"));
    }
    let mut sum = T::zero();
    for_each_tie_ordering(ranking, &mut |order| {
        let v: T = classical_ap(order, affinities, cutoff).expect("relevant items exist");
        sum = sum.clone() + v;
    });
    Ok(sum / T::from_count(count as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::LevelSet;
    use crate::metrics::{
        ap_tie_aware, ap_tie_aware_at_k, build_tie_histogram, dcg_tie_aware, ndcg_tie_aware,
    };
    use crate::ExactRatio;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn enumerates_every_ordering_once() {
        let r = TieGroupedRanking::from_distances(&[0, 0, 0, 1, 1, 2], 2).unwrap();
        let mut seen = std::collections::HashSet::new();
        for_each_tie_ordering(&r, &mut |o| {
            assert!(seen.insert(o.to_vec()));
        });
        assert_eq!(seen.len(), 12);
        assert_eq!(ordering_count(&r), 12);
    }

    #[test]
    fn single_ordering_equals_classical() {
        let r = TieGroupedRanking::from_distances(&[2, 0, 1], 2).unwrap();
        let a = AffinityLevels::binary(&[true, false, true]);
        let v = permutation_average_oracle(&r, &a, RankMetric::Ap, None).unwrap();
        let c: f64 = classical_ap(&[1, 2, 0], &a, None).unwrap();
        assert_eq!(v, c);
    }

    #[test]
    fn two_item_tie_average() {
        let r = TieGroupedRanking::from_distances(&[0, 0], 1).unwrap();
        let a = AffinityLevels::binary(&[true, false]);
        assert!(
            (permutation_average_oracle(&r, &a, RankMetric::Ap, None).unwrap() - 0.75).abs()
                < 1e-15
        );
    }

    #[test]
    fn guard_trips_on_large_ties() {
        let r = TieGroupedRanking::from_distances(&[0; 10], 1).unwrap();
        let a = AffinityLevels::binary(&[true; 10]);
        assert!(matches!(
            permutation_average_oracle(&r, &a, RankMetric::Ap, None),
            Err(TalrError::CombinatorialGuard { .. })
        ));
    }

    #[test]
    fn closed_forms_match_oracle_exactly_in_rationals() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let n = rng.random_range(1..=8);
            let dist: Vec<u32> = (0..n).map(|_| rng.random_range(0..=3)).collect();
            let rel: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            let a = AffinityLevels::binary(&rel);
            let r = TieGroupedRanking::from_distances(&dist, 3).unwrap();
            let h = build_tie_histogram(&r, &a).unwrap();
            if a.num_relevant() == 0 {
                continue;
            }
            let closed: ExactRatio = ap_tie_aware(&h).unwrap();
            let brute: ExactRatio = permutation_average_ap(&r, &a, None).unwrap();
            assert_eq!(closed, brute);
            for k in 1..=n {
                let closed: ExactRatio = ap_tie_aware_at_k(&h, k).unwrap();
                let brute: ExactRatio = permutation_average_ap(&r, &a, Some(k)).unwrap();
                assert_eq!(closed, brute, "k = {k}");
            }
        }
    }

    #[test]
    fn dcg_and_ndcg_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let levels = LevelSet::range(2);
        for _ in 0..300 {
            let n = rng.random_range(1..=8);
            let dist: Vec<u32> = (0..n).map(|_| rng.random_range(0..=3)).collect();
            let aff: Vec<u32> = (0..n).map(|_| rng.random_range(0..=2)).collect();
            let a = AffinityLevels::new(levels.clone(), aff).unwrap();
            let r = TieGroupedRanking::from_distances(&dist, 3).unwrap();
            let h = build_tie_histogram(&r, &a).unwrap();
            for cutoff in [None, Some(1), Some(3), Some(n)] {
                let brute = permutation_average_oracle(&r, &a, RankMetric::Dcg, cutoff).unwrap();
                assert!((dcg_tie_aware(&h, cutoff) - brute).abs() < 1e-12);
                if let Ok(nd) = ndcg_tie_aware(&h, &a, cutoff) {
                    let brute =
                        permutation_average_oracle(&r, &a, RankMetric::Ndcg, cutoff).unwrap();
                    assert!((nd - brute).abs() < 1e-12);
                }
            }
        }
    }
}
