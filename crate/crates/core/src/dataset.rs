//! Feature and label files, query/database splits, standardization and the
//! synthetic Gaussian-cluster generator.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::binio::{put_f32, put_u32, to_u32, ByteReader};
use crate::error::{Result, TalrError};
use crate::matrix::Matrix;

const FEAT_MAGIC: &[u8; 8] = b"TALRFEAT";
const FEAT_VERSION: u32 = 1;
const LABEL_MAGIC: &[u8; 8] = b"TALRLABL";

/// One label set per item; single-label data has one entry per set.
pub type LabelSets = Vec<Vec<u32>>;

pub fn features_to_bytes(features: &Matrix<f64>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(20 + 4 * features.as_slice().len());
    out.extend_from_slice(FEAT_MAGIC);
    put_u32(&mut out, FEAT_VERSION);
    put_u32(&mut out, to_u32(features.rows(), "rows")?);
    put_u32(&mut out, to_u32(features.cols(), "dim")?);
    for &v in features.as_slice() {
        put_f32(&mut out, v as f32);
    }
    Ok(out)
}

pub fn features_from_bytes(bytes: &[u8]) -> Result<Matrix<f64>> {
    let mut r = ByteReader::new(bytes);
    r.magic(FEAT_MAGIC)?;
    let version = r.u32()?;
    if version != FEAT_VERSION {
        return Err(TalrError::Format(format!(
            "unsupported feature file version {version}"
        )));
    }
    let rows = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let mut data = Vec::with_capacity(rows.saturating_mul(dim).min(1 << 28));
    for _ in 0..rows * dim {
        data.push(r.f32()? as f64);
    }
    r.finish()?;
    let m = Matrix::from_vec(rows, dim, data)?;
    check_finite(&m)?;
    Ok(m)
}

fn check_finite(m: &Matrix<f64>) -> Result<()> {
    if let Some(pos) = m.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(TalrError::InvalidInput(format!(
            "non-finite feature at row {}, column {}",
            pos / m.cols().max(1),
            pos % m.cols().max(1)
        )));
    }
    Ok(())
}

fn csv_reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes)
}

fn csv_error(e: csv::Error) -> TalrError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    TalrError::Format(format!("CSV line {line}: {e}"))
}

pub fn features_from_csv(bytes: &[u8]) -> Result<Matrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, rec) in csv_reader(bytes).records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| TalrError::Format(format!("CSV line {}: bad number `{f}`", n + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(TalrError::Format(format!(
                    "CSV line {}: {} columns, expected {}",
                    n + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let m = Matrix::from_rows(&rows)?;
    check_finite(&m)?;
    Ok(m)
}

pub fn features_to_csv(features: &Matrix<f64>) -> String {
    let mut out = String::new();
    for row in features.iter_rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Reads a feature file, binary if it starts with the feature magic and CSV
/// otherwise.
pub fn load_features(path: impl AsRef<Path>) -> Result<Matrix<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(FEAT_MAGIC) {
        features_from_bytes(&bytes)
    } else {
        features_from_csv(&bytes)
    }
}

pub fn save_features(path: impl AsRef<Path>, features: &Matrix<f64>) -> Result<()> {
    std::fs::write(path, features_to_bytes(features)?)?;
    Ok(())
}

pub fn labels_to_bytes(labels: &LabelSets) -> Result<Vec<u8>> {
    let max = labels.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::new();
    out.extend_from_slice(LABEL_MAGIC);
    put_u32(&mut out, to_u32(labels.len(), "rows")?);
    put_u32(&mut out, to_u32(max, "max_labels")?);
    for set in labels {
        put_u32(&mut out, set.len() as u32);
        for &l in set {
            put_u32(&mut out, l);
        }
    }
    Ok(out)
}

pub fn labels_from_bytes(bytes: &[u8]) -> Result<LabelSets> {
    let mut r = ByteReader::new(bytes);
    r.magic(LABEL_MAGIC)?;
    let rows = r.u32()? as usize;
    let max = r.u32()? as usize;
    let mut out = Vec::with_capacity(rows.min(1 << 24));
    for row in 0..rows {
        let count = r.u32()? as usize;
        if count > max {
            return Err(TalrError::Format(format!(
                "row {row} has {count} labels, header allows {max}"
            )));
        }
        let mut set = Vec::with_capacity(count);
        for _ in 0..count {
            set.push(r.u32()?);
        }
        out.push(set);
    }
    r.finish()?;
    Ok(out)
}

/// One row of comma-separated label ids per item; a single empty field is an
/// item without labels.
pub fn labels_from_csv(bytes: &[u8]) -> Result<LabelSets> {
    let mut out = Vec::new();
    for (n, rec) in csv_reader(bytes).records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let set = rec
            .iter()
            .filter(|f| !f.is_empty())
            .map(|f| {
                f.parse::<u32>()
                    .map_err(|_| TalrError::Format(format!("CSV line {}: bad label `{f}`", n + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(set);
    }
    Ok(out)
}

pub fn labels_to_csv(labels: &LabelSets) -> String {
    let mut out = String::new();
    for set in labels {
        if set.is_empty() {
            out.push_str("\"\"");
        } else {
            let cells: Vec<String> = set.iter().map(u32::to_string).collect();
            out.push_str(&cells.join(","));
        }
        out.push('\n');
    }
    out
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelSets> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(LABEL_MAGIC) {
        labels_from_bytes(&bytes)
    } else {
        labels_from_csv(&bytes)
    }
}

pub fn save_labels(path: impl AsRef<Path>, labels: &LabelSets) -> Result<()> {
    std::fs::write(path, labels_to_bytes(labels)?)?;
    Ok(())
}

/// Index lists of the retrieval protocol. Queries and database are disjoint;
/// the training set may overlap the database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub query: Vec<usize>,
    pub database: Vec<usize>,
}

impl Split {
    pub fn validate(&self, num_items: usize) -> Result<()> {
        for (name, list) in [
            ("train", &self.train),
            ("query", &self.query),
            ("database", &self.database),
        ] {
            let mut seen = vec![false; num_items];
            for &i in list {
                if i >= num_items {
                    return Err(TalrError::InvalidInput(format!(
                        "{name} index {i} out of range for {num_items} items"
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(TalrError::InvalidInput(format!(
                        "{name} index {i} repeated"
                    )));
                }
            }
        }
        let mut in_query = vec![false; num_items];
        for &i in &self.query {
            in_query[i] = true;
        }
        if let Some(&i) = self.database.iter().find(|&&i| in_query[i]) {
            return Err(TalrError::InvalidInput(format!(
                "item {i} is both a query and in the database"
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// Per-dimension affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Statistics of the given rows; constant dimensions keep scale 1.
    pub fn fit(features: &Matrix<f64>, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(TalrError::InvalidInput(
                "cannot standardize on zero rows".into(),
            ));
        }
        let d = features.cols();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for &r in rows {
            for (m, x) in mean.iter_mut().zip(features.row(r)) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; d];
        for &r in rows {
            for ((v, x), m) in var.iter_mut().zip(features.row(r)).zip(&mean) {
                *v += (x - m) * (x - m) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, features: &Matrix<f64>) -> Result<Matrix<f64>> {
        if features.cols() != self.mean.len() {
            return Err(TalrError::Dimension(format!(
                "standardizer for {} dimensions applied to {}",
                self.mean.len(),
                features.cols()
            )));
        }
        let mut out = features.clone();
        for r in 0..out.rows() {
            for ((x, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.scale) {
                *x = (*x - m) / s;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub dim: usize,
    pub train: usize,
    pub query: usize,
    pub database: usize,
    /// Distance between any two cluster centres, in units of `sigma`.
    pub separation: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            dim: 32,
            train: 2000,
            query: 400,
            database: 1600,
            separation: 4.0,
            sigma: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub features: Matrix<f64>,
    pub labels: LabelSets,
    pub split: Split,
}

/// Isotropic Gaussian clusters centred at `(sep / √2) σ e_k`, so every pair
/// of centres is `sep σ` apart. Items are assigned to classes round-robin
/// and to train/query/database by a random permutation.
pub fn gaussian_clusters(cfg: &SynthConfig) -> Result<SyntheticData> {
    if cfg.classes == 0 || cfg.classes > cfg.dim {
        return Err(TalrError::Config {
            field: "classes",
            reason: format!(
                "need 1 <= classes <= dim, got {} classes in {} dims",
                cfg.classes, cfg.dim
            ),
        });
    }
    if !(cfg.sigma > 0.0) || !(cfg.separation >= 0.0) {
        return Err(TalrError::Config {
            field: "sigma",
            reason: "sigma must be positive and separation non-negative".into(),
        });
    }
    let n = cfg.train + cfg.query + cfg.database;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let offset = cfg.separation / std::f64::consts::SQRT_2 * cfg.sigma;
    let mut features = Matrix::zeros(n, cfg.dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % cfg.classes;
        let row = features.row_mut(i);
        for x in row.iter_mut() {
            *x = cfg.sigma * rng.sample::<f64, _>(StandardNormal);
        }
        row[class] += offset;
        labels.push(vec![class as u32]);
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let split = Split {
        train: perm[..cfg.train].to_vec(),
        query: perm[cfg.train..cfg.train + cfg.query].to_vec(),
        database: perm[cfg.train + cfg.query..].to_vec(),
    };
    Ok(SyntheticData {
        features,
        labels,
        split,
    })
}
