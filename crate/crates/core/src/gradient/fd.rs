use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::affinity::LevelSet;
use crate::error::{Result, TalrError};
use crate::matrix::Matrix;
use crate::model::HashModel;
use crate::relaxed::{LogForm, Objective};

use super::batch::BatchAffinities;
use super::bin_grads::decomposition_holds;
use super::pipeline::{
    batch_forward, batch_objective, batch_objective_and_grad, BackpropPath, ObjectiveSetup,
};

/// `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference(mut f: impl FnMut(f64) -> Result<f64>, x: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(TalrError::InvalidInput(format!(
            "step must be positive, got {h}"
        )));
    }
    Ok((f(x + h)? - f(x - h)?) / (2.0 * h))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdOptions {
    pub step: f64,
    /// Check every weight up to this many, else a random subset of this size.
    pub max_coordinates: usize,
    /// Batches with a relaxed distance this close to a kernel kink are
    /// rejected as non-smooth.
    pub kink_margin: f64,
    pub seed: u64,
    /// Test hook: add a unit error to this analytic coordinate `(bit, column)`.
    pub corrupt: Option<(usize, usize)>,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coordinates: 200,
            kink_margin: 1e-3,
            seed: 0,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// `(bit, column)` of the worst coordinate.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates_checked: usize,
    pub objective: f64,
}

/// A random minibatch with a random linear model.
#[derive(Debug, Clone)]
pub struct GradcheckCase {
    pub model: HashModel<f64>,
    pub features: Matrix<f64>,
    pub affinities: BatchAffinities,
}

pub fn random_case<R: Rng + ?Sized>(
    rng: &mut R,
    batch: usize,
    bits: usize,
    dim: usize,
    num_levels: usize,
    alpha: f64,
) -> Result<GradcheckCase> {
    if num_levels < 2 {
        return Err(TalrError::InvalidInput(
            "need at least two affinity levels".into(),
        ));
    }
    let model = HashModel::random(bits, dim, false, alpha, rng)?;
    let data = (0..batch * dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let features = Matrix::from_vec(batch, dim, data)?;
    let levels = LevelSet::range(num_levels as u32 - 1);
    let affinities = BatchAffinities::from_fn(levels, batch, |_, _| {
        Ok(rng.random_range(0..num_levels as u32))
    })?;
    Ok(GradcheckCase {
        model,
        features,
        affinities,
    })
}

/// Distance of the batch from the nearest point where the objective is not
/// smooth: a relaxed distance on a kernel kink, or for `AP_r` a bin mass at
/// its guard switch. Distances are in their own units; the smallest ratio to
/// the corresponding window is returned, so values below 1 mean "too close".
pub fn kink_distance(case: &GradcheckCase, setup: &ObjectiveSetup, margin: f64) -> Result<f64> {
    let fwd = batch_forward(&case.model, &case.features, &case.affinities, setup)?;
    let delta = setup.bin_slope;
    let m = fwd.codes.num_items();
    let mut worst = f64::INFINITY;
    for i in 0..m {
        for j in i + 1..m {
            let z = fwd.codes.distance(i, j);
            let lo = ((z - delta).floor().max(0.0)) as usize;
            let hi = (z + delta).ceil() as usize;
            for d in lo..=hi {
                let gap = (z - d as f64).abs();
                worst = worst.min(gap / margin).min((gap - delta).abs() / margin);
            }
        }
    }
    if setup.objective == Objective::ApRelaxed {
        // the tie ratio switches form at c = 1 + eps and is steep just above it
        let switch = 1.0 + setup.options.ratio_eps;
        let window = 10.0 * margin;
        for (s, t) in fwd.soft.iter().zip(&fwd.targets) {
            if t.is_none() {
                continue;
            }
            let mut below = 0.0;
            for d in 0..s.num_bins() {
                let c = s.total(d);
                let gap = if c < switch {
                    (switch - c) / margin
                } else {
                    (c - switch) / window
                };
                worst = worst.min(gap);
                if setup.options.log_form == LogForm::Unshifted {
                    worst = worst.min((below - 1.0f64).abs() / margin);
                }
                below += c;
            }
        }
    }
    Ok(worst)
}

/// Compares the analytic weight gradient with central differences of the
/// batch objective.
pub fn finite_diff_check(
    case: &GradcheckCase,
    setup: &ObjectiveSetup,
    opts: &FdOptions,
) -> Result<FdReport> {
    let eval = batch_objective_and_grad(&case.model, &case.features, &case.affinities, setup)?
        .ok_or_else(|| {
            TalrError::InvalidInput("no query in the batch has a relevant item".into())
        })?;
    let mut analytic = eval.weight_grad;
    if let Some((k, c)) = opts.corrupt {
        if k >= analytic.rows() || c >= analytic.cols() {
            return Err(TalrError::InvalidInput(format!(
                "corrupt coordinate ({k}, {c}) out of range"
            )));
        }
        analytic[(k, c)] += 1.0;
    }
    let (rows, cols) = (analytic.rows(), analytic.cols());
    let total = rows * cols;
    let coords: Vec<usize> = if total <= opts.max_coordinates {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut picked = sample(&mut rng, total, opts.max_coordinates).into_vec();
        picked.sort_unstable();
        picked
    };
    let mut report = FdReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        coordinates_checked: coords.len(),
        objective: eval.value,
    };
    let mut probe = case.model.clone();
    for idx in coords {
        let (k, c) = (idx / cols, idx % cols);
        let w0 = case.model.weights()[(k, c)];
        let numeric = central_difference(
            |w| {
                probe.weights_mut()[(k, c)] = w;
                let v = batch_objective(&probe, &case.features, &case.affinities, setup)?
                    .ok_or_else(|| TalrError::Numeric("objective became undefined".into()))?;
                if !v.is_finite() {
                    return Err(TalrError::Numeric(format!(
                        "non-finite objective at ({k}, {c})"
                    )));
                }
                Ok(v)
            },
            w0,
            opts.step,
        )?;
        probe.weights_mut()[(k, c)] = w0;
        let a = analytic[(k, c)];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if rel > report.max_rel_error || !rel.is_finite() {
            report.max_rel_error = rel;
            report.worst = (k, c);
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckOutcome {
    pub objective: Objective,
    pub report: FdReport,
    pub path: BackpropPath,
    /// Batches rejected for sitting near a kink.
    pub resamples: usize,
    /// Whether the accepted batch still sits near a kink because every
    /// resample did.
    pub kink_adjacent: bool,
    pub decomposition_holds: bool,
}

/// Draws random batches until one is away from kinks (at most
/// `max_resamples` redraws), checks that the per-bin assembly holds there,
/// falling back to the naive numeric path if not, and runs the check.
#[allow(clippy::too_many_arguments)]
pub fn run_gradcheck<R: Rng + ?Sized>(
    rng: &mut R,
    setup: &ObjectiveSetup,
    batch: usize,
    bits: usize,
    dim: usize,
    num_levels: usize,
    alpha: f64,
    max_resamples: usize,
    opts: &FdOptions,
) -> Result<GradcheckOutcome> {
    run_gradcheck_with(setup, max_resamples, opts, || {
        random_case(rng, batch, bits, dim, num_levels, alpha)
    })
}

/// [`run_gradcheck`] with batches supplied by `draw`.
pub fn run_gradcheck_with(
    setup: &ObjectiveSetup,
    max_resamples: usize,
    opts: &FdOptions,
    mut draw: impl FnMut() -> Result<GradcheckCase>,
) -> Result<GradcheckOutcome> {
    let mut resamples = 0;
    let (case, kink_adjacent) = loop {
        let case = draw()?;
        let batch = case.features.rows();
        let defined = (0..batch).any(|i| case.affinities.target(i, setup.objective).is_some());
        let clear = defined && kink_distance(&case, setup, opts.kink_margin)? >= 1.0;
        if clear {
            break (case, false);
        }
        if resamples == max_resamples {
            if !defined {
                return Err(TalrError::InvalidInput(
                    "every sampled batch was degenerate".into(),
                ));
            }
            break (case, true);
        }
        resamples += 1;
    };
    let fwd = batch_forward(&case.model, &case.features, &case.affinities, setup)?;
    let mut holds = true;
    for (s, t) in fwd.soft.iter().zip(&fwd.targets) {
        if let Some(t) = t {
            if !decomposition_holds(setup.objective, s, *t, &setup.options, 1e-5)? {
                holds = false;
                break;
            }
        }
    }
    let mut used = *setup;
    if !holds {
        used.path = BackpropPath::NaiveNumeric;
    }
    let report = finite_diff_check(&case, &used, opts)?;
    Ok(GradcheckOutcome {
        objective: setup.objective,
        report,
        path: used.path,
        resamples,
        kink_adjacent,
        decomposition_holds: holds,
    })
}
