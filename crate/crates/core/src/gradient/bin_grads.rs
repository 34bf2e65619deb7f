use crate::error::{Result, TalrError};
use crate::relaxed::{
    objective_terms, objective_value, Objective, QueryTarget, RelaxOptions, SoftHistogramSet,
};
use crate::scalar::Real;

/// Partials of one query's objective with respect to its soft counts, in
/// double precision. All vectors are `bins x |V|` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGradients {
    pub bins: usize,
    pub num_levels: usize,
    pub value: f64,
    /// `∂O_d/∂c_{d,v}`.
    pub zeta: Vec<f64>,
    /// `∂O_d/∂C_{d-1,v}`.
    pub theta: Vec<f64>,
    /// `∂O/∂c_{d,v} = zeta_{d,v} + sum_{l>d} theta_{l,v}`.
    pub alpha: Vec<f64>,
}

impl QueryGradients {
    #[inline]
    pub fn alpha_at(&self, d: usize, v: usize) -> f64 {
        self.alpha[d * self.num_levels + v]
    }
}

/// Analytic partials `∂O/∂c_{d,v}` of one query. The upstream sum over
/// later bins is a reversed cumulative sum of `theta`.
pub fn objective_bin_grads<T: Real>(
    objective: Objective,
    soft: &SoftHistogramSet<T>,
    target: QueryTarget,
    opts: &RelaxOptions,
) -> Result<QueryGradients> {
    let terms = objective_terms(objective, &soft.to_f64(), target, opts)?;
    let nv = terms.num_levels;
    let bins = terms.num_bins();
    let mut alpha = terms.zeta.clone();
    let mut upstream = vec![0.0; nv];
    for d in (0..bins).rev() {
        for v in 0..nv {
            alpha[d * nv + v] += upstream[v];
            upstream[v] += terms.theta[d * nv + v];
        }
    }
    let value = terms.total();
    if !value.is_finite() || alpha.iter().any(|a| !a.is_finite()) {
        return Err(TalrError::Numeric(format!(
            "{objective} produced a non-finite partial"
        )));
    }
    Ok(QueryGradients {
        bins,
        num_levels: nv,
        value,
        zeta: terms.zeta,
        theta: terms.theta,
        alpha,
    })
}

/// Partials `∂O/∂c_{d,v}` by finite differences on the counts, with no
/// assumption on how the objective splits over bins. `zeta` holds the
/// result and `theta` is zero.
pub fn numeric_bin_grads(
    objective: Objective,
    soft: &SoftHistogramSet<f64>,
    target: QueryTarget,
    opts: &RelaxOptions,
    step: f64,
) -> Result<QueryGradients> {
    let nv = soft.levels().len();
    let bins = soft.num_bins();
    let base: Vec<f64> = (0..bins * nv).map(|k| soft.count(k / nv, k % nv)).collect();
    let eval = |counts: Vec<f64>| -> Result<f64> {
        let s =
            SoftHistogramSet::from_counts(soft.levels().clone(), bins, counts, soft.bin_slope())?;
        objective_value(objective, &s, target, opts)
    };
    let value = eval(base.clone())?;
    let mut alpha = vec![0.0; bins * nv];
    for k in 0..bins * nv {
        let h = step * base[k].max(1.0);
        let at = |x: f64| {
            let mut c = base.clone();
            c[k] = x;
            eval(c)
        };
        alpha[k] = if base[k] >= h {
            (at(base[k] + h)? - at(base[k] - h)?) / (2.0 * h)
        } else {
            // one-sided second-order stencil at the c >= 0 boundary
            (-3.0 * value + 4.0 * at(base[k] + h)? - at(base[k] + 2.0 * h)?) / (2.0 * h)
        };
    }
    Ok(QueryGradients {
        bins,
        num_levels: nv,
        value,
        zeta: alpha.clone(),
        theta: vec![0.0; bins * nv],
        alpha,
    })
}

/// Whether the per-bin assembly reproduces numeric partials of the whole
/// query objective on this histogram.
pub fn decomposition_holds(
    objective: Objective,
    soft: &SoftHistogramSet<f64>,
    target: QueryTarget,
    opts: &RelaxOptions,
    tol: f64,
) -> Result<bool> {
    let analytic = objective_bin_grads(objective, soft, target, opts)?;
    let numeric = numeric_bin_grads(objective, soft, target, opts, 1e-6)?;
    Ok(analytic
        .alpha
        .iter()
        .zip(&numeric.alpha)
        .all(|(a, n)| (a - n).abs() <= tol * a.abs().max(n.abs()).max(1.0)))
}

/// `∂O^(i)/∂c^(i)_{d,v}` for every query of a minibatch. Queries without a
/// defined objective carry zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramGradients {
    m: usize,
    bins: usize,
    nv: usize,
    /// `alpha[(d * nv + v) * m + i]`, so each `(d, v)` is a contiguous column.
    alpha: Vec<f64>,
    zeta: Vec<f64>,
    theta: Vec<f64>,
    values: Vec<Option<f64>>,
}

impl HistogramGradients {
    pub fn from_queries(
        bins: usize,
        num_levels: usize,
        queries: Vec<Option<QueryGradients>>,
    ) -> Result<Self> {
        let m = queries.len();
        let size = bins * num_levels * m;
        let (mut alpha, mut zeta, mut theta) = (vec![0.0; size], vec![0.0; size], vec![0.0; size]);
        let mut values = Vec::with_capacity(m);
        for (i, q) in queries.into_iter().enumerate() {
            let Some(q) = q else {
                values.push(None);
                continue;
            };
            if q.bins != bins || q.num_levels != num_levels {
                return Err(TalrError::Dimension(format!(
                    "query {i} has {} x {} partials, expected {bins} x {num_levels}",
                    q.bins, q.num_levels
                )));
            }
            for k in 0..bins * num_levels {
                alpha[k * m + i] = q.alpha[k];
                zeta[k * m + i] = q.zeta[k];
                theta[k * m + i] = q.theta[k];
            }
            values.push(Some(q.value));
        }
        Ok(Self {
            m,
            bins,
            nv: num_levels,
            alpha,
            zeta,
            theta,
            values,
        })
    }

    pub fn num_queries(&self) -> usize {
        self.m
    }

    pub fn num_bins(&self) -> usize {
        self.bins
    }

    pub fn num_levels(&self) -> usize {
        self.nv
    }

    #[inline]
    pub fn alpha(&self, i: usize, d: usize, v: usize) -> f64 {
        self.alpha[(d * self.nv + v) * self.m + i]
    }

    /// `alpha_{d,v}` across the batch.
    pub fn alpha_column(&self, d: usize, v: usize) -> &[f64] {
        let k = d * self.nv + v;
        &self.alpha[k * self.m..(k + 1) * self.m]
    }

    pub fn zeta(&self, i: usize, d: usize, v: usize) -> f64 {
        self.zeta[(d * self.nv + v) * self.m + i]
    }

    pub fn theta(&self, i: usize, d: usize, v: usize) -> f64 {
        self.theta[(d * self.nv + v) * self.m + i]
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn num_defined(&self) -> usize {
        self.values.iter().flatten().count()
    }

    /// Mean objective over defined queries.
    pub fn mean_value(&self) -> Option<f64> {
        let n = self.num_defined();
        (n > 0).then(|| self.values.iter().flatten().sum::<f64>() / n as f64)
    }
}
