use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TalrError};
use crate::matrix::Matrix;
use crate::model::HashModel;
use crate::relaxed::{
    objective_value, soft_histograms_from_distances, Objective, QueryTarget, RelaxOptions,
    RelaxedCodes, SoftHistogramSet,
};
use crate::scalar::Real;

use super::backprop::{
    beta_matrices, fused_backprop, minibatch_backprop, naive_backprop, BatchJacobian,
};
use super::batch::BatchAffinities;
use super::bin_grads::{numeric_bin_grads, objective_bin_grads, HistogramGradients};

/// How `∂O/∂Φ̂` is assembled from the per-bin partials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackpropPath {
    /// Dense `B_{d,v}` matrices.
    Matrix,
    /// Pairwise accumulation touching only nonzero kernel slopes.
    Fused,
    /// Per-query chain rule on analytic per-bin partials.
    Naive,
    /// Per-query chain rule on numeric per-bin partials; makes no assumption
    /// about how the objective splits over bins.
    NaiveNumeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSetup {
    pub objective: Objective,
    pub options: RelaxOptions,
    pub bin_slope: f64,
    pub path: BackpropPath,
}

impl ObjectiveSetup {
    pub fn new(objective: Objective) -> Self {
        Self {
            objective,
            options: RelaxOptions::default(),
            bin_slope: 1.0,
            path: BackpropPath::Fused,
        }
    }
}

/// Forward pass of one minibatch.
#[derive(Debug, Clone)]
pub struct BatchForward<T> {
    pub codes: RelaxedCodes<T>,
    pub soft: Vec<SoftHistogramSet<T>>,
    pub targets: Vec<Option<QueryTarget>>,
}

pub fn batch_forward<T: Real>(
    model: &HashModel<T>,
    features: &Matrix<T>,
    affinities: &BatchAffinities,
    setup: &ObjectiveSetup,
) -> Result<BatchForward<T>> {
    let m = features.rows();
    if m < 2 {
        return Err(TalrError::InvalidInput(format!(
            "minibatch of {m} items; need at least 2"
        )));
    }
    if affinities.len() != m {
        return Err(TalrError::Dimension(format!(
            "{} affinity rows for a batch of {m}",
            affinities.len()
        )));
    }
    let codes = model.relaxed_codes(features)?;
    let dist = codes.distance_matrix();
    let slope = T::of(setup.bin_slope);
    let soft = (0..m)
        .into_par_iter()
        .map(|i| {
            soft_histograms_from_distances(
                dist.row(i),
                affinities.level_row(i),
                Some(i),
                affinities.levels(),
                codes.num_bits(),
                slope,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let targets = (0..m)
        .map(|i| affinities.target(i, setup.objective))
        .collect();
    Ok(BatchForward {
        codes,
        soft,
        targets,
    })
}

/// Mean objective over queries with at least one relevant item, `None` if
/// there are none.
pub fn batch_objective<T: Real>(
    model: &HashModel<T>,
    features: &Matrix<T>,
    affinities: &BatchAffinities,
    setup: &ObjectiveSetup,
) -> Result<Option<f64>> {
    let fwd = batch_forward(model, features, affinities, setup)?;
    let values = fwd
        .soft
        .par_iter()
        .zip(&fwd.targets)
        .map(|(s, t)| match t {
            Some(t) => objective_value(setup.objective, &s.to_f64(), *t, &setup.options).map(Some),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    let defined: Vec<f64> = values.into_iter().flatten().collect();
    Ok((!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64))
}

#[derive(Debug, Clone)]
pub struct BatchEvaluation {
    pub value: f64,
    pub per_query: Vec<Option<f64>>,
    pub num_defined: usize,
    /// `∂O/∂W`, same shape as the model weights.
    pub weight_grad: Matrix<f64>,
    pub jacobian: BatchJacobian,
    pub mean_abs_code: f64,
}

/// Objective and weight gradient of one minibatch, `None` for a degenerate
/// batch where no query has a relevant item.
pub fn batch_objective_and_grad<T: Real>(
    model: &HashModel<T>,
    features: &Matrix<T>,
    affinities: &BatchAffinities,
    setup: &ObjectiveSetup,
) -> Result<Option<BatchEvaluation>> {
    let fwd = batch_forward(model, features, affinities, setup)?;
    let bins = fwd.codes.num_bits() + 1;
    let nv = affinities.levels().len();
    let queries = fwd
        .soft
        .par_iter()
        .zip(&fwd.targets)
        .map(|(s, t)| match t {
            None => Ok(None),
            Some(t) if setup.path == BackpropPath::NaiveNumeric => {
                numeric_bin_grads(setup.objective, &s.to_f64(), *t, &setup.options, 1e-6).map(Some)
            }
            Some(t) => objective_bin_grads(setup.objective, s, *t, &setup.options).map(Some),
        })
        .collect::<Result<Vec<_>>>()?;
    let grads = HistogramGradients::from_queries(bins, nv, queries)?;
    let Some(value) = grads.mean_value() else {
        return Ok(None);
    };
    let jacobian = match setup.path {
        BackpropPath::Matrix => {
            let betas = beta_matrices(&fwd.codes, affinities, setup.bin_slope)?;
            minibatch_backprop(&fwd.codes, &grads, &betas)?
        }
        BackpropPath::Fused => fused_backprop(&fwd.codes, affinities, &grads, setup.bin_slope)?,
        BackpropPath::Naive | BackpropPath::NaiveNumeric => {
            naive_backprop(&fwd.codes, affinities, &grads, setup.bin_slope)?
        }
    };
    let weight_grad = model_backprop(&jacobian, &fwd.codes, features, model.has_bias())?;
    if weight_grad.as_slice().iter().any(|g| !g.is_finite()) {
        return Err(TalrError::Numeric("non-finite weight gradient".into()));
    }
    Ok(Some(BatchEvaluation {
        value,
        per_query: grads.values().to_vec(),
        num_defined: grads.num_defined(),
        weight_grad,
        jacobian,
        mean_abs_code: fwd.codes.mean_abs().f64(),
    }))
}

/// `∂O/∂W = [∂O/∂Φ̂ ⊙ α(1 - Φ̂²)]ᵀ X` for the linear model, with a trailing
/// bias column when `has_bias`.
pub fn model_backprop<T: Real>(
    jac: &BatchJacobian,
    codes: &RelaxedCodes<T>,
    features: &Matrix<T>,
    has_bias: bool,
) -> Result<Matrix<f64>> {
    let m = codes.num_items();
    let b = codes.num_bits();
    if jac.d_phi.rows() != m || jac.d_phi.cols() != b || features.rows() != m {
        return Err(TalrError::Dimension(format!(
            "jacobian {}x{}, codes {m}x{b}, features {} rows",
            jac.d_phi.rows(),
            jac.d_phi.cols(),
            features.rows()
        )));
    }
    let dim = features.cols();
    let alpha = codes.alpha().f64();
    let mut grad = Matrix::zeros(b, dim + usize::from(has_bias));
    for i in 0..m {
        let phi = codes.row(i);
        let x = features.row(i);
        for k in 0..b {
            let p = phi[k].f64();
            let g = jac.d_phi[(i, k)] * alpha * (1.0 - p * p);
            if g == 0.0 {
                continue;
            }
            let row = grad.row_mut(k);
            for (o, xc) in row.iter_mut().zip(x) {
                *o += g * xc.f64();
            }
            if has_bias {
                row[dim] += g;
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::LevelSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_item_batch_is_constant_for_ap_s() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let model = HashModel::<f64>::random(6, 4, false, 2.0, &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![0.3, -1.0, 2.0, 0.1], vec![1.5, 0.2, -0.7, 0.4]]).unwrap();
        let aff = BatchAffinities::from_values(LevelSet::binary(), 2, vec![0, 1, 1, 0]).unwrap();
        let ev = batch_objective_and_grad(
            &model,
            &x,
            &aff,
            &ObjectiveSetup::new(Objective::ApSimplified),
        )
        .unwrap()
        .unwrap();
        assert!((ev.value - 1.0).abs() < 1e-12);
        assert!(ev.weight_grad.as_slice().iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn degenerate_batch_signals_none() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let model = HashModel::<f64>::random(4, 3, false, 1.0, &mut rng).unwrap();
        let x = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let aff = BatchAffinities::from_values(LevelSet::binary(), 3, vec![0; 9]).unwrap();
        let setup = ObjectiveSetup::new(Objective::DcgSimplified);
        assert!(batch_objective_and_grad(&model, &x, &aff, &setup)
            .unwrap()
            .is_none());
        assert!(batch_objective(&model, &x, &aff, &setup).unwrap().is_none());
    }

    #[test]
    fn separated_classes_score_high() {
        // two classes on opposite saturated codes
        let w = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let model = HashModel::from_weights(w, false, 50.0).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            rows.push(vec![sign * (1.0 + i as f64 / 10.0), 0.3]);
            labels.push(i % 2);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let aff = BatchAffinities::from_fn(LevelSet::binary(), 10, |i, j| {
            Ok(u32::from(labels[i] == labels[j]))
        })
        .unwrap();
        let v = batch_objective(
            &model,
            &x,
            &aff,
            &ObjectiveSetup::new(Objective::ApSimplified),
        )
        .unwrap()
        .unwrap();
        assert!(v >= 0.99, "{v}");
    }

    #[test]
    fn saturated_codes_vanishing_gradient() {
        let codes = RelaxedCodes::from_values(
            Matrix::from_rows(&[vec![0.999999999], vec![-0.999999999]]).unwrap(),
            3.0,
        )
        .unwrap();
        let jac = BatchJacobian {
            d_phi: Matrix::filled(2, 1, 1.0),
            pair_weights: Matrix::zeros(2, 2),
            num_defined: 2,
        };
        let x = Matrix::filled(2, 1, 1.0);
        let g = model_backprop(&jac, &codes, &x, false).unwrap();
        assert!(g[(0, 0)].abs() < 1e-7);
    }

    #[test]
    fn single_bit_single_feature_chain() {
        // ∂/∂w of g(tanh(α w x)) = g' α (1 - tanh²) x
        let (w, x, alpha, upstream) = (0.4f64, 1.7, 2.0, -0.3);
        let phi = (alpha * w * x).tanh();
        let codes =
            RelaxedCodes::from_values(Matrix::from_rows(&[vec![phi]]).unwrap(), alpha).unwrap();
        let jac = BatchJacobian {
            d_phi: Matrix::filled(1, 1, upstream),
            pair_weights: Matrix::zeros(1, 1),
            num_defined: 1,
        };
        let g = model_backprop(&jac, &codes, &Matrix::filled(1, 1, x), true).unwrap();
        assert!((g[(0, 0)] - upstream * alpha * (1.0 - phi * phi) * x).abs() < 1e-15);
        assert!((g[(0, 1)] - upstream * alpha * (1.0 - phi * phi)).abs() < 1e-15);
    }
}
