use crate::affinity::{AffinityLevels, LevelSet};
use crate::error::{Result, TalrError};
use crate::hamming::TieGroupedRanking;

/// Integer histograms `n_{d,v}` of a tie-grouped ranking, conditioned on the
/// affinity level, with cumulative sums `N_{d,v}`.
///
/// "Positive" quantities (`n_d^+`, `N_d^+`, `N^+`) pool every level `v > 0`,
/// which is the `v = 1` slice for binary affinities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TieHistogram {
    levels: LevelSet,
    bins: usize,
    counts: Vec<u64>,
    cum: Vec<u64>,
    totals: Vec<u64>,
    cum_totals: Vec<u64>,
    positives: Vec<u64>,
    cum_positives: Vec<u64>,
}

impl TieHistogram {
    /// Builds from a `bins x |V|` row-major count table.
    pub fn from_counts(levels: LevelSet, bins: usize, counts: Vec<u64>) -> Result<Self> {
        let nv = levels.len();
        if counts.len() != bins * nv {
            return Err(TalrError::Dimension(format!(
                "{} counts for {bins} bins x {nv} levels",
                counts.len()
            )));
        }
        let mut cum = counts.clone();
        for d in 1..bins {
            for v in 0..nv {
                cum[d * nv + v] += cum[(d - 1) * nv + v];
            }
        }
        let totals: Vec<u64> = counts.chunks(nv.max(1)).map(|r| r.iter().sum()).collect();
        let positives: Vec<u64> = counts
            .chunks(nv.max(1))
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(v, _)| levels.is_positive(*v))
                    .map(|(_, &c)| c)
                    .sum()
            })
            .collect();
        let prefix = |xs: &[u64]| {
            xs.iter()
                .scan(0u64, |s, &x| {
                    *s += x;
                    Some(*s)
                })
                .collect::<Vec<_>>()
        };
        Ok(Self {
            cum_totals: prefix(&totals),
            cum_positives: prefix(&positives),
            levels,
            bins,
            counts,
            cum,
            totals,
            positives,
        })
    }

    pub fn levels(&self) -> &LevelSet {
        &self.levels
    }

    /// Number of bins, `b + 1`.
    pub fn num_bins(&self) -> usize {
        self.bins
    }

    #[inline]
    pub fn count(&self, d: usize, v: usize) -> u64 {
        self.counts[d * self.levels.len() + v]
    }

    #[inline]
    pub fn cum_count(&self, d: usize, v: usize) -> u64 {
        self.cum[d * self.levels.len() + v]
    }

    /// `n_d`.
    #[inline]
    pub fn size(&self, d: usize) -> u64 {
        self.totals[d]
    }

    /// `N_d`.
    #[inline]
    pub fn cum_size(&self, d: usize) -> u64 {
        self.cum_totals[d]
    }

    /// `N_{d-1}`, zero for the first bin.
    #[inline]
    pub fn before(&self, d: usize) -> u64 {
        if d == 0 {
            0
        } else {
            self.cum_totals[d - 1]
        }
    }

    /// `n_d^+`.
    #[inline]
    pub fn positives(&self, d: usize) -> u64 {
        self.positives[d]
    }

    /// `N_d^+`.
    #[inline]
    pub fn cum_positives(&self, d: usize) -> u64 {
        self.cum_positives[d]
    }

    /// `N_{d-1}^+`.
    #[inline]
    pub fn positives_before(&self, d: usize) -> u64 {
        if d == 0 {
            0
        } else {
            self.cum_positives[d - 1]
        }
    }

    /// `|S|`.
    pub fn total(&self) -> u64 {
        self.cum_totals.last().copied().unwrap_or(0)
    }

    /// `N^+`.
    pub fn total_positives(&self) -> u64 {
        self.cum_positives.last().copied().unwrap_or(0)
    }

    /// Items per level over all bins.
    pub fn level_totals(&self) -> Vec<u64> {
        let nv = self.levels.len();
        (0..nv).map(|v| self.cum_count(self.bins - 1, v)).collect()
    }

    /// Gain mass `sum_v G(v) n_{d,v}` of bin `d`.
    pub fn gain_mass(&self, d: usize) -> f64 {
        self.levels
            .gains()
            .iter()
            .enumerate()
            .map(|(v, g)| g * self.count(d, v) as f64)
            .sum()
    }
}

/// Tallies each tie group by affinity level.
pub fn build_tie_histogram(
    ranking: &TieGroupedRanking,
    affinities: &AffinityLevels,
) -> Result<TieHistogram> {
    if ranking.total() != affinities.len() {
        return Err(TalrError::Dimension(format!(
            "ranking has {} items but {} affinities were given",
            ranking.total(),
            affinities.len()
        )));
    }
    let levels = affinities.levels().clone();
    let nv = levels.len();
    let bins = ranking.num_groups();
    let level_idx = affinities.level_indices();
    let mut counts = vec![0u64; bins * nv];
    for (d, group) in ranking.groups().enumerate() {
        for &i in group {
            counts[d * nv + level_idx[i]] += 1;
        }
    }
    TieHistogram::from_counts(levels, bins, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn example_histogram() {
        let r = TieGroupedRanking::from_distances(&[2, 0, 1, 1], 2).unwrap();
        let a = AffinityLevels::binary(&[true, true, false, true]);
        let h = build_tie_histogram(&r, &a).unwrap();
        assert_eq!(
            (0..3).map(|d| h.positives(d)).collect::<Vec<_>>(),
            vec![1, 1, 1]
        );
        assert_eq!((0..3).map(|d| h.size(d)).collect::<Vec<_>>(), vec![1, 2, 1]);
        assert_eq!(
            (0..3).map(|d| h.cum_positives(d)).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        assert_eq!(h.total(), 4);
        assert_eq!(h.total_positives(), 3);
    }

    #[test]
    fn empty_groups_give_zero_histogram() {
        let r = TieGroupedRanking::from_distances(&[], 4).unwrap();
        let h = build_tie_histogram(&r, &AffinityLevels::binary(&[])).unwrap();
        assert_eq!(h.num_bins(), 5);
        assert!((0..5).all(|d| h.size(d) == 0 && h.cum_size(d) == 0));
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let r = TieGroupedRanking::from_distances(&[0, 1], 2).unwrap();
        assert!(build_tie_histogram(&r, &AffinityLevels::binary(&[true])).is_err());
    }

    #[test]
    fn level_totals_match_direct_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let levels = LevelSet::new(vec![0, 1, 2, 5]).unwrap();
        let n = 500;
        let dist: Vec<u32> = (0..n).map(|_| rng.random_range(0..=10)).collect();
        let aff: Vec<u32> = (0..n)
            .map(|_| levels.value(rng.random_range(0..4)))
            .collect();
        let r = TieGroupedRanking::from_distances(&dist, 10).unwrap();
        let h = build_tie_histogram(
            &r,
            &AffinityLevels::new(levels.clone(), aff.clone()).unwrap(),
        )
        .unwrap();
        for (v, &lv) in levels.values().iter().enumerate() {
            let direct = aff.iter().filter(|&&a| a == lv).count() as u64;
            assert_eq!((0..11).map(|d| h.count(d, v)).sum::<u64>(), direct);
            assert_eq!(h.level_totals()[v], direct);
        }
        for d in 0..11 {
            assert_eq!((0..4).map(|v| h.count(d, v)).sum::<u64>(), h.size(d));
            if d > 0 {
                assert!(h.cum_size(d) >= h.cum_size(d - 1));
            }
        }
        assert_eq!(h.cum_size(10), n as u64);
    }
}
