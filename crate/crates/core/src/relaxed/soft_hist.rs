use crate::affinity::{AffinityLevels, LevelSet};
use crate::error::{Result, TalrError};
use crate::metrics::TieHistogram;
use crate::scalar::Real;

use super::codes::RelaxedCodes;

/// Triangular kernel `max(0, 1 - |z - d| / slope)`.
#[inline]
pub fn soft_bin<T: Real>(z: T, d: usize, slope: T) -> T {
    let gap = (z - T::of_usize(d)).abs();
    (T::one() - gap / slope).max(T::zero())
}

/// Derivative of [`soft_bin`] in `z`; zero at the kinks `|z - d| in {0, slope}`.
#[inline]
pub fn soft_bin_slope<T: Real>(z: T, d: usize, slope: T) -> T {
    let diff = z - T::of_usize(d);
    let gap = diff.abs();
    if gap == T::zero() || gap >= slope {
        T::zero()
    } else if diff > T::zero() {
        -slope.recip()
    } else {
        slope.recip()
    }
}

/// Soft distance histograms `c_{d,v}` of one query, with cumulative sums.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftHistogramSet<T> {
    levels: LevelSet,
    bins: usize,
    slope: T,
    soft: Vec<T>,
    cum: Vec<T>,
}

impl<T: Real> SoftHistogramSet<T> {
    /// Wraps a `bins x |V|` row-major table of soft counts.
    pub fn from_counts(levels: LevelSet, bins: usize, soft: Vec<T>, slope: T) -> Result<Self> {
        let nv = levels.len();
        if soft.len() != bins * nv {
            return Err(TalrError::Dimension(format!(
                "{} soft counts for {bins} bins x {nv} levels",
                soft.len()
            )));
        }
        if soft.iter().any(|c| !(*c >= T::zero()) || !c.is_finite()) {
            return Err(TalrError::InvalidInput(
                "soft counts must be finite and >= 0".into(),
            ));
        }
        let mut cum = soft.clone();
        for d in 1..bins {
            for v in 0..nv {
                let below = cum[(d - 1) * nv + v];
                cum[d * nv + v] += below;
            }
        }
        Ok(Self {
            levels,
            bins,
            slope,
            soft,
            cum,
        })
    }

    /// Integer histogram viewed as a (degenerate) soft one.
    pub fn from_hard(h: &TieHistogram) -> Self {
        let nv = h.levels().len();
        let soft = (0..h.num_bins() * nv)
            .map(|k| T::of(h.count(k / nv, k % nv) as f64))
            .collect();
        Self::from_counts(h.levels().clone(), h.num_bins(), soft, T::one()).expect("valid counts")
    }

    pub fn to_f64(&self) -> SoftHistogramSet<f64> {
        SoftHistogramSet {
            levels: self.levels.clone(),
            bins: self.bins,
            slope: self.slope.f64(),
            soft: self.soft.iter().map(|v| v.f64()).collect(),
            cum: self.cum.iter().map(|v| v.f64()).collect(),
        }
    }

    pub fn levels(&self) -> &LevelSet {
        &self.levels
    }

    pub fn num_bins(&self) -> usize {
        self.bins
    }

    pub fn bin_slope(&self) -> T {
        self.slope
    }

    /// `c_{d,v}` for level index `v`.
    #[inline]
    pub fn count(&self, d: usize, v: usize) -> T {
        self.soft[d * self.levels.len() + v]
    }

    /// `C_{d,v}`.
    #[inline]
    pub fn cum_count(&self, d: usize, v: usize) -> T {
        self.cum[d * self.levels.len() + v]
    }

    /// `C_{d-1,v}`, zero for `d = 0`.
    #[inline]
    pub fn cum_before(&self, d: usize, v: usize) -> T {
        if d == 0 {
            T::zero()
        } else {
            self.cum_count(d - 1, v)
        }
    }

    /// Soft counts `c_{d,·}` of bin `d`.
    pub fn bin(&self, d: usize) -> &[T] {
        let nv = self.levels.len();
        &self.soft[d * nv..(d + 1) * nv]
    }

    /// `C_{d-1,·}` for bin `d`.
    pub fn below(&self, d: usize) -> Vec<T> {
        (0..self.levels.len())
            .map(|v| self.cum_before(d, v))
            .collect()
    }

    /// `c_d`.
    pub fn total(&self, d: usize) -> T {
        self.bin(d).iter().copied().sum()
    }

    /// `C_d`.
    pub fn cum_total(&self, d: usize) -> T {
        (0..self.levels.len()).map(|v| self.cum_count(d, v)).sum()
    }

    /// `c_d^+`, pooling every level `v > 0`.
    pub fn positives(&self, d: usize) -> T {
        self.bin(d)
            .iter()
            .enumerate()
            .filter(|(v, _)| self.levels.is_positive(*v))
            .map(|(_, c)| *c)
            .sum()
    }

    /// `C_d^+`.
    pub fn cum_positives(&self, d: usize) -> T {
        (0..self.levels.len())
            .filter(|&v| self.levels.is_positive(v))
            .map(|v| self.cum_count(d, v))
            .sum()
    }

    /// Total soft mass `sum_{d,v} c_{d,v}`.
    pub fn mass(&self) -> T {
        self.soft.iter().copied().sum()
    }

    /// Soft mass of relevant items, `sum_d c_d^+`.
    pub fn positive_mass(&self) -> T {
        (0..self.bins).map(|d| self.positives(d)).sum()
    }

    /// L1 distance to an integer histogram over the same bins and levels.
    pub fn l1_to_hard(&self, h: &TieHistogram) -> T {
        let nv = self.levels.len();
        (0..self.bins * nv)
            .map(|k| (self.soft[k] - T::of(h.count(k / nv, k % nv) as f64)).abs())
            .sum()
    }
}

/// Soft histograms from one row of relaxed distances. `skip` excludes the
/// query itself; `level_idx` gives each item's level index.
pub fn soft_histograms_from_distances<T: Real>(
    distances: &[T],
    level_idx: &[usize],
    skip: Option<usize>,
    levels: &LevelSet,
    num_bits: usize,
    slope: T,
) -> Result<SoftHistogramSet<T>> {
    if !(slope > T::zero()) {
        return Err(TalrError::InvalidInput(format!(
            "bin slope must be positive, got {slope}"
        )));
    }
    if distances.len() != level_idx.len() {
        return Err(TalrError::Dimension(
            "distances and levels differ in length".into(),
        ));
    }
    let nv = levels.len();
    let bins = num_bits + 1;
    let mut soft = vec![T::zero(); bins * nv];
    let reach = slope.ceil().to_usize().unwrap_or(bins);
    for (i, (&z, &v)) in distances.iter().zip(level_idx).enumerate() {
        if Some(i) == skip {
            continue;
        }
        let centre = z.round().to_usize().unwrap_or(0).min(num_bits);
        let lo = centre.saturating_sub(reach + 1);
        let hi = (centre + reach + 1).min(num_bits);
        for d in lo..=hi {
            soft[d * nv + v] += soft_bin(z, d, slope);
        }
    }
    SoftHistogramSet::from_counts(levels.clone(), bins, soft, slope)
}

/// Soft histograms for `query` against the rest of the batch.
///
/// `affinities` holds `A_query(i)` for every batch item; the query's own
/// entry is ignored.
pub fn build_soft_histograms<T: Real>(
    query: usize,
    relaxed: &RelaxedCodes<T>,
    affinities: &AffinityLevels,
    slope: T,
) -> Result<SoftHistogramSet<T>> {
    let m = relaxed.num_items();
    if affinities.len() != m {
        return Err(TalrError::Dimension(format!(
            "{} affinities for a batch of {m}",
            affinities.len()
        )));
    }
    if m < 2 || query >= m {
        return Err(TalrError::InvalidInput(
            "query needs a nonempty database within the batch".into(),
        ));
    }
    let distances: Vec<T> = (0..m).map(|i| relaxed.distance(query, i)).collect();
    soft_histograms_from_distances(
        &distances,
        &affinities.level_indices(),
        Some(query),
        affinities.levels(),
        relaxed.num_bits(),
        slope,
    )
}
