//! Affinity levels of database items with respect to one query.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TalrError};

/// Gain of an affinity level, `2^v - 1`.
#[inline]
pub fn gain(v: u32) -> f64 {
    (2f64).powi(v as i32) - 1.0
}

/// Finite set `V` of non-negative affinity levels, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSet {
    levels: Vec<u32>,
}

impl LevelSet {
    pub fn new(mut levels: Vec<u32>) -> Result<Self> {
        levels.sort_unstable();
        levels.dedup();
        if levels.is_empty() {
            return Err(TalrError::InvalidInput("empty level set".into()));
        }
        Ok(Self { levels })
    }

    /// `V = {0, 1}`.
    pub fn binary() -> Self {
        Self { levels: vec![0, 1] }
    }

    /// `V = {0, 1, ..., max}`.
    pub fn range(max: u32) -> Self {
        Self {
            levels: (0..=max).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn values(&self) -> &[u32] {
        &self.levels
    }

    pub fn value(&self, idx: usize) -> u32 {
        self.levels[idx]
    }

    pub fn index_of(&self, v: u32) -> Result<usize> {
        self.levels
            .binary_search(&v)
            .map_err(|_| TalrError::UnknownLevel {
                value: v,
                levels: self.levels.clone(),
            })
    }

    pub fn gains(&self) -> Vec<f64> {
        self.levels.iter().map(|&v| gain(v)).collect()
    }

    /// Whether the level at `idx` counts as relevant for AP (any `v > 0`).
    #[inline]
    pub fn is_positive(&self, idx: usize) -> bool {
        self.levels[idx] > 0
    }
}

/// Per-item affinity values `A_q(i)` for a fixed query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffinityLevels {
    levels: LevelSet,
    per_item: Vec<u32>,
}

impl AffinityLevels {
    pub fn new(levels: LevelSet, per_item: Vec<u32>) -> Result<Self> {
        for &v in &per_item {
            levels.index_of(v)?;
        }
        Ok(Self { levels, per_item })
    }

    pub fn binary(relevant: &[bool]) -> Self {
        Self {
            levels: LevelSet::binary(),
            per_item: relevant.iter().map(|&r| u32::from(r)).collect(),
        }
    }

    pub fn levels(&self) -> &LevelSet {
        &self.levels
    }

    pub fn values(&self) -> &[u32] {
        &self.per_item
    }

    pub fn len(&self) -> usize {
        self.per_item.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_item.is_empty()
    }

    #[inline]
    pub fn value(&self, i: usize) -> u32 {
        self.per_item[i]
    }

    #[inline]
    pub fn is_relevant(&self, i: usize) -> bool {
        self.per_item[i] > 0
    }

    /// Number of items with positive affinity.
    pub fn num_relevant(&self) -> usize {
        self.per_item.iter().filter(|&&v| v > 0).count()
    }

    /// Level indices (positions in the sorted level set) per item.
    pub fn level_indices(&self) -> Vec<usize> {
        self.per_item
            .iter()
            .map(|&v| self.levels.index_of(v).expect("validated on construction"))
            .collect()
    }
}
