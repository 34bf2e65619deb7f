//! Pairwise affinity levels from labels or feature distances.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affinity::{AffinityLevels, LevelSet};
use crate::dataset::LabelSets;
use crate::error::{Result, TalrError};
use crate::gradient::BatchAffinities;
use crate::matrix::Matrix;

/// Pairs sampled when estimating distance quantiles on large sets.
const QUANTILE_PAIRS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffinityMode {
    /// 1 iff the two items carry the same label.
    SingleLabel,
    /// Number of shared labels.
    MultilabelSharedCount,
    /// Level from the Euclidean distance quantile the pair falls in.
    ThresholdMultilevel,
}

impl AffinityMode {
    pub fn name(self) -> &'static str {
        match self {
            AffinityMode::SingleLabel => "single_label",
            AffinityMode::MultilabelSharedCount => "multilabel_shared_count",
            AffinityMode::ThresholdMultilevel => "threshold_multilevel",
        }
    }
}

impl fmt::Display for AffinityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AffinityMode {
    type Err = TalrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "single_label" => Ok(AffinityMode::SingleLabel),
            "multilabel_shared_count" | "multilabel" => Ok(AffinityMode::MultilabelSharedCount),
            "threshold_multilevel" | "threshold" => Ok(AffinityMode::ThresholdMultilevel),
            _ => Err(TalrError::Config {
                field: "affinity_mode",
                reason: format!(
                    "unknown mode `{s}` (expected single_label, multilabel_shared_count or threshold_multilevel)"
                ),
            }),
        }
    }
}

/// Features plus optional label sets, indexed by item.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub features: Matrix<f64>,
    pub labels: Option<LabelSets>,
}

impl LabeledData {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityOracle {
    pub mode: AffinityMode,
    pub levels: LevelSet,
    /// Threshold mode: quantiles, strictly decreasing.
    pub quantiles: Vec<f64>,
    /// Threshold mode: level per quantile, strictly increasing.
    pub level_values: Vec<u32>,
    /// Threshold mode: distance at each quantile.
    pub cuts: Vec<f64>,
}

impl AffinityOracle {
    pub fn single_label() -> Self {
        Self {
            mode: AffinityMode::SingleLabel,
            levels: LevelSet::binary(),
            quantiles: vec![],
            level_values: vec![],
            cuts: vec![],
        }
    }

    /// Shared-count oracle whose levels run up to the largest label set.
    pub fn multilabel(labels: &LabelSets) -> Self {
        let max = labels.iter().map(Vec::len).max().unwrap_or(1).max(1) as u32;
        Self {
            mode: AffinityMode::MultilabelSharedCount,
            levels: LevelSet::range(max),
            quantiles: vec![],
            level_values: vec![],
            cuts: vec![],
        }
    }

    /// Threshold oracle with precomputed cut distances.
    pub fn threshold_from_cuts(
        quantiles: Vec<f64>,
        level_values: Vec<u32>,
        cuts: Vec<f64>,
    ) -> Result<Self> {
        if quantiles.is_empty()
            || quantiles.len() != level_values.len()
            || cuts.len() != quantiles.len()
        {
            return Err(TalrError::Config {
                field: "thresholds",
                reason: format!(
                    "{} quantiles, {} level values and {} cuts must match and be nonempty",
                    quantiles.len(),
                    level_values.len(),
                    cuts.len()
                ),
            });
        }
        if quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0))
            || quantiles.windows(2).any(|w| w[0] <= w[1])
        {
            return Err(TalrError::Config {
                field: "thresholds",
                reason: format!(
                    "quantiles must lie in (0, 1) and strictly decrease, got {quantiles:?}"
                ),
            });
        }
        if level_values[0] == 0 || level_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TalrError::Config {
                field: "level_values",
                reason: format!(
                    "level values must be positive and strictly increase, got {level_values:?}"
                ),
            });
        }
        let mut all = vec![0];
        all.extend_from_slice(&level_values);
        Ok(Self {
            mode: AffinityMode::ThresholdMultilevel,
            levels: LevelSet::new(all)?,
            quantiles,
            level_values,
            cuts,
        })
    }

    /// Threshold oracle with cuts at the given quantiles of pairwise
    /// Euclidean distances among `rows`. Large sets use a seeded sample of
    /// pairs.
    pub fn threshold(
        features: &Matrix<f64>,
        rows: &[usize],
        quantiles: Vec<f64>,
        level_values: Vec<u32>,
        seed: u64,
    ) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(TalrError::InvalidInput(
                "threshold affinities need at least two rows".into(),
            ));
        }
        let pairs = n * (n - 1) / 2;
        let mut dist = Vec::with_capacity(pairs.min(QUANTILE_PAIRS));
        if pairs <= QUANTILE_PAIRS {
            for a in 0..n {
                for b in a + 1..n {
                    dist.push(euclidean(features.row(rows[a]), features.row(rows[b])));
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            while dist.len() < QUANTILE_PAIRS {
                let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
                if a != b {
                    dist.push(euclidean(features.row(rows[a]), features.row(rows[b])));
                }
            }
        }
        dist.sort_unstable_by(f64::total_cmp);
        let cuts = quantiles
            .iter()
            .map(|q| dist[((q * (dist.len() - 1) as f64).floor() as usize).min(dist.len() - 1)])
            .collect();
        Self::threshold_from_cuts(quantiles, level_values, cuts)
    }

    /// The four-threshold setting: quantiles 5%, 1%, 0.2%, 0.1% with values
    /// 1, 2, 5, 10.
    pub fn default_thresholds() -> (Vec<f64>, Vec<u32>) {
        (vec![0.05, 0.01, 0.002, 0.001], vec![1, 2, 5, 10])
    }

    pub fn levels(&self) -> &LevelSet {
        &self.levels
    }

    /// Affinity of items `i` and `j`.
    pub fn pair(&self, data: &LabeledData, i: usize, j: usize) -> Result<u32> {
        match self.mode {
            AffinityMode::SingleLabel | AffinityMode::MultilabelSharedCount => {
                let labels = data.labels.as_ref().ok_or_else(|| {
                    TalrError::InvalidInput(format!("{} affinities need labels", self.mode))
                })?;
                let (a, b) = (&labels[i], &labels[j]);
                if self.mode == AffinityMode::SingleLabel {
                    return Ok(u32::from(!a.is_empty() && a == b));
                }
                let shared = a.iter().filter(|l| b.contains(l)).count() as u32;
                Ok(shared.min(self.levels.value(self.levels.len() - 1)))
            }
            AffinityMode::ThresholdMultilevel => {
                let d = euclidean(data.features.row(i), data.features.row(j));
                Ok(self
                    .cuts
                    .iter()
                    .zip(&self.level_values)
                    .rev()
                    .find(|(cut, _)| d <= **cut)
                    .map_or(0, |(_, v)| *v))
            }
        }
    }

    /// Affinities of the items `batch` among themselves.
    pub fn batch(&self, data: &LabeledData, batch: &[usize]) -> Result<BatchAffinities> {
        BatchAffinities::from_fn(self.levels.clone(), batch.len(), |a, b| {
            self.pair(data, batch[a], batch[b])
        })
    }

    /// Affinities of every `database` item to `query`.
    pub fn query_row(
        &self,
        data: &LabeledData,
        query: usize,
        database: &[usize],
    ) -> Result<AffinityLevels> {
        let values = database
            .iter()
            .map(|&j| self.pair(data, query, j))
            .collect::<Result<Vec<_>>>()?;
        AffinityLevels::new(self.levels.clone(), values)
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
