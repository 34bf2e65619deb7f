use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use talr_core::affinity_oracle::{AffinityMode, AffinityOracle, LabeledData};
use talr_core::dataset::{load_features, load_labels, LabelSets, Split, Standardizer};
use talr_core::{AffinityLevels, Matrix, Result, TalrError};

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Directory written by `talr synth` (features, labels, split.json).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Feature matrix, TALRFEAT or CSV.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Label sets, TALRLABL or CSV.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// JSON file with `train`, `query` and `database` index lists.
    #[arg(long)]
    pub split: Option<PathBuf>,
}

/// How pairwise affinities are derived. Unset fields fall back to labels
/// when present, thresholds otherwise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct AffinityArgs {
    /// single_label, multilabel or threshold.
    #[arg(long)]
    pub affinity_mode: Option<String>,
    /// Distance quantiles for threshold affinities, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Affinity value of each threshold, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    pub level_values: Option<Vec<u32>>,
}

impl AffinityArgs {
    pub fn merge(&mut self, other: &AffinityArgs) {
        if other.affinity_mode.is_some() {
            self.affinity_mode.clone_from(&other.affinity_mode);
        }
        if other.thresholds.is_some() {
            self.thresholds.clone_from(&other.thresholds);
        }
        if other.level_values.is_some() {
            self.level_values.clone_from(&other.level_values);
        }
    }
}

fn first_existing(dir: &Path, names: &[&str]) -> Option<PathBuf> {
    names.iter().map(|n| dir.join(n)).find(|p| p.exists())
}

/// Items, split and affinity oracle of one run. Features are standardized
/// with statistics of the training rows (the database when there are none).
pub struct Dataset {
    pub data: LabeledData,
    pub split: Split,
    pub oracle: AffinityOracle,
    pub has_features: bool,
}

impl Dataset {
    pub fn load(args: &DataArgs, aff: &AffinityArgs, seed: u64) -> Result<Self> {
        Self::load_with(args, aff, seed, None)
    }

    /// `num_items` lets label-only runs proceed without a feature file.
    pub fn load_with(
        args: &DataArgs,
        aff: &AffinityArgs,
        seed: u64,
        num_items: Option<usize>,
    ) -> Result<Self> {
        let dir = args.data.as_deref();
        let features_path = args
            .features
            .clone()
            .or_else(|| dir.and_then(|d| first_existing(d, &["features.bin", "features.csv"])));
        let labels_path = args
            .labels
            .clone()
            .or_else(|| dir.and_then(|d| first_existing(d, &["labels.bin", "labels.csv"])));
        let split_path = args
            .split
            .clone()
            .or_else(|| dir.map(|d| d.join("split.json")))
            .ok_or_else(|| TalrError::Config {
                field: "split",
                reason: "pass --split or --data".into(),
            })?;
        let split = Split::load(split_path)?;
        let labels: Option<LabelSets> = labels_path.map(load_labels).transpose()?;
        let (features, has_features) = match features_path {
            Some(p) => (load_features(p)?, true),
            None => {
                let n = num_items
                    .or_else(|| labels.as_ref().map(Vec::len))
                    .ok_or_else(|| TalrError::Config {
                        field: "features",
                        reason: "pass --features or --data".into(),
                    })?;
                (Matrix::zeros(n, 0), false)
            }
        };
        split.validate(features.rows())?;
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(TalrError::Dimension(format!(
                    "{} label rows for {} items",
                    l.len(),
                    features.rows()
                )));
            }
        }
        let fit_rows = if split.train.is_empty() {
            &split.database
        } else {
            &split.train
        };
        let features = if has_features {
            Standardizer::fit(&features, fit_rows)?.apply(&features)?
        } else {
            features
        };
        let mode = match &aff.affinity_mode {
            Some(m) => m.parse()?,
            None if labels.is_some() => AffinityMode::SingleLabel,
            None => AffinityMode::ThresholdMultilevel,
        };
        let oracle = match mode {
            AffinityMode::SingleLabel => AffinityOracle::single_label(),
            AffinityMode::MultilabelSharedCount => {
                let l = labels.as_ref().ok_or_else(|| {
                    TalrError::InvalidInput("multilabel affinities need --labels".into())
                })?;
                AffinityOracle::multilabel(l)
            }
            AffinityMode::ThresholdMultilevel => {
                if !has_features {
                    return Err(TalrError::InvalidInput(
                        "threshold affinities need --features".into(),
                    ));
                }
                let (q, v) = AffinityOracle::default_thresholds();
                AffinityOracle::threshold(
                    &features,
                    fit_rows,
                    aff.thresholds.clone().unwrap_or(q),
                    aff.level_values.clone().unwrap_or(v),
                    seed,
                )?
            }
        };
        if mode != AffinityMode::ThresholdMultilevel && labels.is_none() {
            return Err(TalrError::InvalidInput(format!(
                "{mode} affinities need --labels"
            )));
        }
        Ok(Self {
            data: LabeledData { features, labels },
            split,
            oracle,
            has_features,
        })
    }

    pub fn query_affinities(&self) -> Result<Vec<AffinityLevels>> {
        self.split
            .query
            .iter()
            .map(|&q| self.oracle.query_row(&self.data, q, &self.split.database))
            .collect()
    }
}
