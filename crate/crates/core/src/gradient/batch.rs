use crate::affinity::{gain, AffinityLevels, LevelSet};
use crate::error::{Result, TalrError};
use crate::metrics::discount;
use crate::relaxed::{Objective, QueryTarget};

/// Symmetric pairwise affinity levels of a minibatch. The diagonal is
/// meaningless: no item is retrieved against itself.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchAffinities {
    levels: LevelSet,
    m: usize,
    values: Vec<u32>,
    idx: Vec<usize>,
}

impl BatchAffinities {
    /// Builds the table from `f(i, j)` evaluated once per unordered pair.
    pub fn from_fn(
        levels: LevelSet,
        m: usize,
        mut f: impl FnMut(usize, usize) -> Result<u32>,
    ) -> Result<Self> {
        let floor = levels.value(0);
        let mut values = vec![floor; m * m];
        for i in 0..m {
            for j in i + 1..m {
                let v = f(i, j)?;
                values[i * m + j] = v;
                values[j * m + i] = v;
            }
        }
        Self::from_values(levels, m, values)
    }

    /// Row-major `M x M` affinity values; must be symmetric off the diagonal.
    pub fn from_values(levels: LevelSet, m: usize, values: Vec<u32>) -> Result<Self> {
        if values.len() != m * m {
            return Err(TalrError::Dimension(format!(
                "{} affinities for a batch of {m}",
                values.len()
            )));
        }
        let mut idx = vec![0; m * m];
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                if values[i * m + j] != values[j * m + i] {
                    return Err(TalrError::InvalidInput(format!(
                        "affinity of ({i}, {j}) is not symmetric"
                    )));
                }
                idx[i * m + j] = levels.index_of(values[i * m + j])?;
            }
        }
        Ok(Self {
            levels,
            m,
            values,
            idx,
        })
    }

    pub fn levels(&self) -> &LevelSet {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> u32 {
        self.values[i * self.m + j]
    }

    #[inline]
    pub fn level_index(&self, i: usize, j: usize) -> usize {
        self.idx[i * self.m + j]
    }

    /// Level indices of row `i`.
    pub fn level_row(&self, i: usize) -> &[usize] {
        &self.idx[i * self.m..(i + 1) * self.m]
    }

    /// Affinities of every batch item to query `i`, own entry included.
    pub fn query(&self, i: usize) -> AffinityLevels {
        let row = self.values[i * self.m..(i + 1) * self.m].to_vec();
        AffinityLevels::new(self.levels.clone(), row).expect("levels validated")
    }

    /// Number of relevant items for query `i` among the rest of the batch.
    pub fn num_relevant(&self, i: usize) -> usize {
        (0..self.m)
            .filter(|&j| j != i && self.value(i, j) > 0)
            .count()
    }

    /// Ideal DCG of query `i` over the rest of the batch, by counting.
    pub fn ideal_dcg(&self, i: usize) -> f64 {
        let nv = self.levels.len();
        let mut counts = vec![0usize; nv];
        for j in (0..self.m).filter(|&j| j != i) {
            counts[self.level_index(i, j)] += 1;
        }
        let mut t = 0u64;
        let mut acc = 0.0;
        for v in (0..nv).rev() {
            let g = gain(self.levels.value(v));
            for _ in 0..counts[v] {
                t += 1;
                acc += g * discount(t);
            }
        }
        acc
    }

    /// Per-query constants, `None` when the query has no relevant item.
    pub fn target(&self, i: usize, objective: Objective) -> Option<QueryTarget> {
        let n_plus = self.num_relevant(i);
        if n_plus == 0 {
            return None;
        }
        Some(if objective.is_ap() {
            QueryTarget::ap(n_plus as f64)
        } else {
            QueryTarget::dcg(self.ideal_dcg(i))
        })
    }
}
