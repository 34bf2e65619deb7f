//! Minibatch gradient ascent of a relaxed objective over a linear hash
//! model, with a growing tanh scale.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affinity::AffinityLevels;
use crate::affinity_oracle::{AffinityOracle, LabeledData};
use crate::error::{Result, TalrError};
use crate::eval::evaluate;
use crate::gradient::{batch_objective_and_grad, BackpropPath, BatchAffinities, ObjectiveSetup};
use crate::hamming::{binarize_and_pack, TieGroupedRanking};
use crate::matrix::Matrix;
use crate::metrics::{ap_tie_aware, build_tie_histogram, dcg_tie_aware, RankMetric};
use crate::model::HashModel;
use crate::relaxed::{Objective, RelaxOptions};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub alpha: f64,
    /// Multiplier applied to `alpha` after every epoch.
    pub alpha_growth: f64,
    pub alpha_cap: f64,
    pub objective: Objective,
    pub bin_slope: f64,
    pub relax: RelaxOptions,
    pub seed: u64,
    /// Epochs without improvement of the epoch objective before the
    /// learning rate is multiplied by `lr_decay`.
    pub plateau_patience: usize,
    pub lr_decay: f64,
    pub backprop: BackpropPath,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            epochs: 60,
            learning_rate: 0.1,
            momentum: 0.9,
            alpha: 1.0,
            alpha_growth: 1.05,
            alpha_cap: 40.0,
            objective: Objective::ApSimplified,
            bin_slope: 1.0,
            relax: RelaxOptions::default(),
            seed: 0,
            plateau_patience: 5,
            lr_decay: 0.5,
            backprop: BackpropPath::Fused,
        }
    }
}

fn bad(field: &'static str, reason: String) -> TalrError {
    TalrError::Config { field, reason }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(bad(
                "batch_size",
                format!("must be at least 2, got {}", self.batch_size),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(bad(
                "learning_rate",
                format!("must be finite and >= 0, got {}", self.learning_rate),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(bad(
                "momentum",
                format!("must lie in [0, 1), got {}", self.momentum),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(bad(
                "alpha",
                format!("must be positive, got {}", self.alpha),
            ));
        }
        if !(self.alpha_growth >= 1.0 && self.alpha_growth.is_finite()) {
            return Err(bad(
                "alpha_growth",
                format!("must be >= 1, got {}", self.alpha_growth),
            ));
        }
        if !(self.alpha_cap >= self.alpha) {
            return Err(bad(
                "alpha_cap",
                format!("must be >= alpha = {}, got {}", self.alpha, self.alpha_cap),
            ));
        }
        if !(self.bin_slope > 0.0 && self.bin_slope.is_finite()) {
            return Err(bad(
                "bin_slope",
                format!("must be positive, got {}", self.bin_slope),
            ));
        }
        if !(self.relax.ratio_eps > 0.0) {
            return Err(bad(
                "relax.ratio_eps",
                format!("must be positive, got {}", self.relax.ratio_eps),
            ));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(bad(
                "lr_decay",
                format!("must lie in (0, 1], got {}", self.lr_decay),
            ));
        }
        if self.plateau_patience == 0 {
            return Err(bad("plateau_patience", "must be at least 1".into()));
        }
        Ok(())
    }

    pub fn setup(&self) -> ObjectiveSetup {
        ObjectiveSetup {
            objective: self.objective,
            options: self.relax,
            bin_slope: self.bin_slope,
            path: self.backprop,
        }
    }

    /// Metric the objective relaxes.
    pub fn metric(&self) -> RankMetric {
        if self.objective.is_ap() {
            RankMetric::Ap
        } else {
            RankMetric::Ndcg
        }
    }
}

/// Next tanh scale: `min(cap, alpha * growth)`.
pub fn alpha_schedule_step(alpha: f64, cfg: &TrainConfig) -> f64 {
    (alpha * cfg.alpha_growth).min(cfg.alpha_cap)
}

/// Training items with the oracle that relates them.
pub struct TrainSet<'a> {
    pub data: &'a LabeledData,
    pub rows: &'a [usize],
    pub oracle: &'a AffinityOracle,
}

/// Held-out queries ranked against a database with true binary codes.
#[derive(Debug, Clone)]
pub struct ValidationSet {
    pub queries: Matrix<f64>,
    pub database: Matrix<f64>,
    pub affinities: Vec<AffinityLevels>,
    pub metric: RankMetric,
}

impl ValidationSet {
    pub fn new(
        data: &LabeledData,
        oracle: &AffinityOracle,
        queries: &[usize],
        database: &[usize],
        metric: RankMetric,
    ) -> Result<Self> {
        let affinities = queries
            .iter()
            .map(|&q| oracle.query_row(data, q, database))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            queries: data.features.select_rows(queries),
            database: data.features.select_rows(database),
            affinities,
            metric,
        })
    }

    /// Mean tie-aware metric over queries where it is defined.
    pub fn score<T: Real>(&self, model: &HashModel<T>) -> Result<f64> {
        let q = model.encode(&self.queries.map(|x| T::of(*x)))?;
        let db = model.encode(&self.database.map(|x| T::of(*x)))?;
        let res = evaluate(&q, &db, &|i| Ok(self.affinities[i].clone()), None)?;
        let report = match self.metric {
            RankMetric::Ap => res.ap,
            RankMetric::Dcg => res.dcg,
            RankMetric::Ndcg => res.ndcg,
        };
        report.mean.ok_or_else(|| {
            TalrError::InvalidInput("no validation query has a relevant item".into())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean relaxed objective over the epoch's batches, before each update.
    pub objective: f64,
    /// Mean exact tie-aware metric of the same batches on `sgn` codes.
    pub exact_metric: f64,
    pub mean_abs_code: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    pub batches: usize,
    pub skipped_batches: usize,
    pub validation: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub initial_validation: Option<f64>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn final_validation(&self) -> Option<f64> {
        self.epochs
            .last()
            .and_then(|e| e.validation)
            .or(self.initial_validation)
    }
}

/// Exact tie-aware metric of every defined query against the rest of the
/// batch, on binary codes.
fn exact_batch_metric<T: Real>(
    model: &HashModel<T>,
    features: &Matrix<T>,
    aff: &BatchAffinities,
    metric: RankMetric,
) -> Result<Option<f64>> {
    let codes = binarize_and_pack(&model.activations(features)?)?;
    let m = features.rows();
    let mut acc = 0.0;
    let mut n = 0usize;
    for i in 0..m {
        let rest: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        let values: Vec<u32> = rest.iter().map(|&j| aff.value(i, j)).collect();
        let levels = AffinityLevels::new(aff.levels().clone(), values)?;
        if levels.num_relevant() == 0 {
            continue;
        }
        let dist: Vec<u32> = rest
            .iter()
            .map(|&j| crate::hamming::hamming_distance(codes.row(i), codes.row(j)))
            .collect::<Result<_>>()?;
        let h = build_tie_histogram(
            &TieGroupedRanking::from_distances(&dist, codes.num_bits())?,
            &levels,
        )?;
        acc += match metric {
            RankMetric::Ap => ap_tie_aware::<f64>(&h)?,
            RankMetric::Dcg => dcg_tie_aware(&h, None),
            RankMetric::Ndcg => dcg_tie_aware(&h, None) / crate::metrics::ideal_dcg(&levels, None)?,
        };
        n += 1;
    }
    Ok((n > 0).then(|| acc / n as f64))
}

/// Trains `model` in place. `on_epoch` sees every record as it is produced.
pub fn train<T: Real>(
    model: &mut HashModel<T>,
    set: &TrainSet<'_>,
    cfg: &TrainConfig,
    validation: Option<&ValidationSet>,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainHistory> {
    cfg.validate()?;
    if set.rows.len() < 2 {
        return Err(TalrError::InvalidInput(format!(
            "{} training rows; need at least 2",
            set.rows.len()
        )));
    }
    if set.data.features.cols() != model.input_dim() {
        return Err(TalrError::Dimension(format!(
            "model expects {} features, data has {}",
            model.input_dim(),
            set.data.features.cols()
        )));
    }
    let setup = cfg.setup();
    let metric = cfg.metric();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = set.rows.to_vec();
    let mut velocity = vec![0.0f64; model.weights().as_slice().len()];
    let mut alpha = cfg.alpha;
    let mut lr = cfg.learning_rate;
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut history = TrainHistory {
        initial_validation: validation.map(|v| v.score(model)).transpose()?,
        epochs: Vec::with_capacity(cfg.epochs),
    };
    for epoch in 0..cfg.epochs {
        model.set_alpha(alpha);
        order.shuffle(&mut rng);
        let (mut obj_sum, mut exact_sum, mut code_sum) = (0.0, 0.0, 0.0);
        let (mut used, mut skipped, mut exact_n) = (0usize, 0usize, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            let features = set.data.features.select_rows(batch).map(|x| T::of(*x));
            let aff = set.oracle.batch(set.data, batch)?;
            let Some(eval) = batch_objective_and_grad(model, &features, &aff, &setup)? else {
                skipped += 1;
                continue;
            };
            if !eval.value.is_finite() {
                return Err(TalrError::Numeric(format!(
                    "objective diverged at epoch {epoch}, batch {}",
                    used + skipped
                )));
            }
            if let Some(e) = exact_batch_metric(model, &features, &aff, metric)? {
                exact_sum += e;
                exact_n += 1;
            }
            obj_sum += eval.value;
            code_sum += eval.mean_abs_code;
            used += 1;
            for ((w, v), g) in model
                .weights_mut()
                .as_mut_slice()
                .iter_mut()
                .zip(velocity.iter_mut())
                .zip(eval.weight_grad.as_slice())
            {
                *v = cfg.momentum * *v + lr * g;
                *w += T::of(*v);
            }
            if model.weights().as_slice().iter().any(|w| !w.is_finite()) {
                return Err(TalrError::Numeric(format!(
                    "weights diverged at epoch {epoch}"
                )));
            }
        }
        let objective = if used > 0 {
            obj_sum / used as f64
        } else {
            f64::NAN
        };
        let record = EpochRecord {
            epoch,
            objective,
            exact_metric: if exact_n > 0 {
                exact_sum / exact_n as f64
            } else {
                f64::NAN
            },
            mean_abs_code: if used > 0 {
                code_sum / used as f64
            } else {
                f64::NAN
            },
            alpha,
            learning_rate: lr,
            batches: used,
            skipped_batches: skipped,
            validation: validation.map(|v| v.score(model)).transpose()?,
        };
        on_epoch(&record);
        history.epochs.push(record);
        if used > 0 {
            if objective > best + 1e-6 {
                best = objective;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.plateau_patience {
                    lr *= cfg.lr_decay;
                    stale = 0;
                }
            }
        }
        alpha = alpha_schedule_step(alpha, cfg);
    }
    model.set_alpha(alpha);
    Ok(history)
}
