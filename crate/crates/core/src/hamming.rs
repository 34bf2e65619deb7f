//! Packed binary codes, Hamming distances and counting-sort ranking.
//!
//! Code element `+1` is stored as bit 1 and `-1` as bit 0. Bit `j` of a row
//! lives in word `j / 64` at position `j % 64` (little-endian within the
//! word); rows are stored contiguously.

use std::path::Path;

use crate::affinity::{gain, LevelSet};
use crate::binio::{put_u32, put_u64, to_u32, ByteReader};
use crate::error::{Result, TalrError};
use crate::matrix::Matrix;
use crate::scalar::Real;

const CODE_MAGIC: &[u8; 8] = b"TALRCODE";
const CODE_VERSION: u32 = 1;

#[inline]
fn words_for(num_bits: usize) -> usize {
    num_bits.div_ceil(64)
}

#[inline]
fn tail_mask(num_bits: usize) -> u64 {
    match num_bits % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// Borrowed view of one packed code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeRow<'a> {
    pub words: &'a [u64],
    pub num_bits: usize,
}

impl CodeRow<'_> {
    #[inline]
    pub fn bit(&self, j: usize) -> bool {
        (self.words[j / 64] >> (j % 64)) & 1 == 1
    }

    /// The code as a `±1` vector.
    pub fn to_pm1(&self) -> Vec<i8> {
        (0..self.num_bits)
            .map(|j| if self.bit(j) { 1 } else { -1 })
            .collect()
    }
}

/// Packed `b`-bit codes for a set of items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryCodebook {
    num_items: usize,
    num_bits: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BinaryCodebook {
    /// Wraps already-packed words, rejecting nonzero tail bits.
    pub fn from_words(num_items: usize, num_bits: usize, words: Vec<u64>) -> Result<Self> {
        if num_bits == 0 {
            return Err(TalrError::InvalidInput(
                "codes need at least one bit".into(),
            ));
        }
        let words_per_row = words_for(num_bits);
        if words.len() != num_items * words_per_row {
            return Err(TalrError::Dimension(format!(
                "{} words for {num_items} rows of {num_bits} bits",
                words.len()
            )));
        }
        let mask = tail_mask(num_bits);
        for i in 0..num_items {
            if words[(i + 1) * words_per_row - 1] & !mask != 0 {
                return Err(TalrError::InvalidInput(format!(
                    "row {i} has nonzero bits past bit {num_bits}"
                )));
            }
        }
        Ok(Self {
            num_items,
            num_bits,
            words_per_row,
            words,
        })
    }

    /// Packs a `±1` matrix (any positive entry counts as `+1`).
    pub fn from_pm1(codes: &Matrix<i8>) -> Result<Self> {
        Self::pack_with(codes.rows(), codes.cols(), |i, j| codes[(i, j)] > 0)
    }

    fn pack_with(
        num_items: usize,
        num_bits: usize,
        mut bit: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        if num_bits == 0 {
            return Err(TalrError::InvalidInput(
                "codes need at least one bit".into(),
            ));
        }
        let words_per_row = words_for(num_bits);
        let mut words = vec![0u64; num_items * words_per_row];
        for i in 0..num_items {
            let row = &mut words[i * words_per_row..(i + 1) * words_per_row];
            for j in 0..num_bits {
                if bit(i, j) {
                    row[j / 64] |= 1u64 << (j % 64);
                }
            }
        }
        Ok(Self {
            num_items,
            num_bits,
            words_per_row,
            words,
        })
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_bits(&self) -> usize {
        self.num_bits
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn row(&self, i: usize) -> CodeRow<'_> {
        CodeRow {
            words: &self.words[i * self.words_per_row..(i + 1) * self.words_per_row],
            num_bits: self.num_bits,
        }
    }

    /// Unpacks all rows into a `±1` matrix.
    pub fn to_pm1(&self) -> Matrix<i8> {
        let data = (0..self.num_items)
            .flat_map(|i| self.row(i).to_pm1())
            .collect();
        Matrix::from_vec(self.num_items, self.num_bits, data).expect("shape")
    }

    /// Hamming distance from `query` to every row.
    pub fn distances(&self, query: CodeRow<'_>) -> Result<Vec<u32>> {
        check_width(query.num_bits, self.num_bits)?;
        Ok((0..self.num_items)
            .map(|i| popcount_xor(query.words, self.row(i).words))
            .collect())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(20 + 8 * self.words.len());
        out.extend_from_slice(CODE_MAGIC);
        put_u32(&mut out, CODE_VERSION);
        put_u32(&mut out, to_u32(self.num_items, "num_items")?);
        put_u32(&mut out, to_u32(self.num_bits, "num_bits")?);
        for &w in &self.words {
            put_u64(&mut out, w);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(CODE_MAGIC)?;
        let version = r.u32()?;
        if version != CODE_VERSION {
            return Err(TalrError::Format(format!(
                "unsupported codebook version {version}"
            )));
        }
        let num_items = r.u32()? as usize;
        let num_bits = r.u32()? as usize;
        let n_words = num_items * words_for(num_bits);
        let mut words = Vec::with_capacity(n_words);
        for _ in 0..n_words {
            words.push(r.u64()?);
        }
        r.finish()?;
        Self::from_words(num_items, num_bits, words)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Hashes activations by sign: bit set iff the activation is `> 0`, so an
/// exact zero maps to `-1`.
pub fn binarize_and_pack<T: Real>(activations: &Matrix<T>) -> Result<BinaryCodebook> {
    if let Some(pos) = activations.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(TalrError::InvalidInput(format!(
            "non-finite activation at row {}, column {}",
            pos / activations.cols().max(1),
            pos % activations.cols().max(1)
        )));
    }
    BinaryCodebook::pack_with(activations.rows(), activations.cols(), |i, j| {
        activations[(i, j)] > T::zero()
    })
}

#[inline]
fn check_width(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(TalrError::Dimension(format!(
            "code widths {a} and {b} differ"
        )));
    }
    Ok(())
}

#[inline]
fn popcount_xor(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Number of differing bits, `(b - <a, b>) / 2` for `±1` codes.
pub fn hamming_distance(a: CodeRow<'_>, b: CodeRow<'_>) -> Result<u32> {
    check_width(a.num_bits, b.num_bits)?;
    Ok(popcount_xor(a.words, b.words))
}

/// A Hamming ranking as `b + 1` tie groups; group `d` holds the database
/// indices at distance exactly `d`, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TieGroupedRanking {
    order: Vec<usize>,
    offsets: Vec<usize>,
}

impl TieGroupedRanking {
    /// Buckets items by integer distance with a counting sort.
    pub fn from_distances(distances: &[u32], num_bits: usize) -> Result<Self> {
        let mut offsets = vec![0usize; num_bits + 2];
        for &d in distances {
            let d = d as usize;
            if d > num_bits {
                return Err(TalrError::InvalidInput(format!(
                    "distance {d} exceeds code width {num_bits}"
                )));
            }
            offsets[d + 1] += 1;
        }
        for d in 1..offsets.len() {
            offsets[d] += offsets[d - 1];
        }
        let mut cursor = offsets.clone();
        let mut order = vec![0usize; distances.len()];
        for (i, &d) in distances.iter().enumerate() {
            let slot = &mut cursor[d as usize];
            order[*slot] = i;
            *slot += 1;
        }
        Ok(Self { order, offsets })
    }

    /// Number of groups, `b + 1`.
    pub fn num_groups(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn group(&self, d: usize) -> &[usize] {
        &self.order[self.offsets[d]..self.offsets[d + 1]]
    }

    pub fn groups(&self) -> impl Iterator<Item = &[usize]> {
        (0..self.num_groups()).map(move |d| self.group(d))
    }

    /// `|S|`.
    pub fn total(&self) -> usize {
        self.order.len()
    }

    /// Group sizes `n_d`.
    pub fn group_sizes(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// All items, group by group.
    pub fn flattened(&self) -> &[usize] {
        &self.order
    }
}

/// Ranks the database against `query` in `O(bN)`.
pub fn counting_sort_rank(
    query: CodeRow<'_>,
    database: &BinaryCodebook,
) -> Result<TieGroupedRanking> {
    let distances = database.distances(query)?;
    TieGroupedRanking::from_distances(&distances, database.num_bits())
}

/// Gains `2^v - 1` of the given affinities in descending order, by counting
/// per level.
pub fn sort_gains_desc(affinities: &[u32], levels: &LevelSet) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; levels.len()];
    for &v in affinities {
        counts[levels.index_of(v)?] += 1;
    }
    let mut out = Vec::with_capacity(affinities.len());
    for (idx, &n) in counts.iter().enumerate().rev() {
        out.extend(std::iter::repeat_n(gain(levels.value(idx)), n));
    }
    Ok(out)
}
