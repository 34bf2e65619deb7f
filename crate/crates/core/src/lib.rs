//! Tie-aware ranking metrics for Hamming-distance retrieval, and learning of
//! linear hash functions by direct optimization of relaxed versions of those
//! metrics.

pub mod affinity;
pub mod affinity_oracle;
mod binio;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gradient;
pub mod hamming;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod relaxed;
pub mod report;
pub mod scalar;
pub mod train;

pub use affinity::{AffinityLevels, LevelSet};
pub use error::{Result, TalrError};
pub use hamming::{
    binarize_and_pack, counting_sort_rank, hamming_distance, sort_gains_desc, BinaryCodebook,
    CodeRow, TieGroupedRanking,
};
pub use matrix::Matrix;
pub use model::HashModel;
pub use scalar::{MetricField, Real};

/// Exact rational scalar for AP-family metrics.
pub type ExactRatio = num_rational::BigRational;

pub type HashModel64 = HashModel<f64>;
pub type HashModel32 = HashModel<f32>;
pub type RelaxedCodes64 = relaxed::RelaxedCodes<f64>;
pub type RelaxedCodes32 = relaxed::RelaxedCodes<f32>;
