use serde::{Deserialize, Serialize};

/// Per-query values of one metric plus their mean over defined queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub cutoff: Option<usize>,
    /// `None` marks a query where the metric is undefined.
    pub per_query: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub num_defined: usize,
    pub num_undefined: usize,
}

impl MetricReport {
    pub fn from_values(
        metric: impl Into<String>,
        cutoff: Option<usize>,
        per_query: Vec<Option<f64>>,
    ) -> Self {
        let defined: Vec<f64> = per_query.iter().flatten().copied().collect();
        let mean =
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        Self {
            metric: metric.into(),
            cutoff,
            num_defined: defined.len(),
            num_undefined: per_query.len() - defined.len(),
            per_query,
            mean,
        }
    }

    /// Recomputes the mean from `per_query` and compares it with the stored one.
    pub fn is_consistent(&self, tol: f64) -> bool {
        let again = Self::from_values(self.metric.clone(), self.cutoff, self.per_query.clone());
        let means_agree = match (again.mean, self.mean) {
            (Some(a), Some(b)) => (a - b).abs() <= tol,
            (None, None) => true,
            _ => false,
        };
        means_agree && again.num_defined == self.num_defined
    }
}
