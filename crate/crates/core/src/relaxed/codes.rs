use crate::error::{Result, TalrError};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Relaxed codes `tanh(alpha * f)`, one row per item.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedCodes<T> {
    values: Matrix<T>,
    alpha: T,
}

impl<T: Real> RelaxedCodes<T> {
    /// Wraps precomputed code values, which must lie strictly inside `(-1, 1)`.
    pub fn from_values(values: Matrix<T>, alpha: T) -> Result<Self> {
        if values.as_slice().iter().any(|v| !(v.abs() < T::one())) {
            return Err(TalrError::InvalidInput(
                "relaxed code outside (-1, 1)".into(),
            ));
        }
        Ok(Self { values, alpha })
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn num_items(&self) -> usize {
        self.values.rows()
    }

    pub fn num_bits(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.values.row(i)
    }

    /// Relaxed Hamming distance between items `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> T {
        half_gap(self.row(i), self.row(j))
    }

    /// Mean absolute code value; approaches 1 as the codes saturate.
    pub fn mean_abs(&self) -> T {
        let n = self.values.as_slice().len();
        if n == 0 {
            return T::zero();
        }
        self.values.as_slice().iter().map(|v| v.abs()).sum::<T>() / T::of_usize(n)
    }

    /// Pairwise relaxed distances, `M x M`.
    pub fn distance_matrix(&self) -> Matrix<T> {
        let m = self.num_items();
        let mut out = Matrix::zeros(m, m);
        for i in 0..m {
            for j in i + 1..m {
                let d = self.distance(i, j);
                out[(i, j)] = d;
                out[(j, i)] = d;
            }
        }
        out
    }
}

#[inline]
fn half_gap<T: Real>(q: &[T], x: &[T]) -> T {
    let dot: T = q.iter().zip(x).map(|(a, b)| *a * *b).sum();
    (T::of_usize(q.len()) - dot) * T::of(0.5)
}

/// Elementwise `tanh(alpha * f)`.
///
/// Saturated entries are pulled to `±(1 - eps)` so every value stays strictly
/// inside `(-1, 1)`.
pub fn relax_codes<T: Real>(activations: &Matrix<T>, alpha: T) -> Result<RelaxedCodes<T>> {
    if !(alpha > T::zero()) || !alpha.is_finite() {
        return Err(TalrError::InvalidInput(format!(
            "tanh scale must be positive, got {alpha}"
        )));
    }
    if activations.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(TalrError::InvalidInput("non-finite activation".into()));
    }
    let bound = T::one() - T::epsilon();
    let values = activations.map(|&f| (alpha * f).tanh().max(-bound).min(bound));
    Ok(RelaxedCodes { values, alpha })
}

/// `(b - <q, x>) / 2`.
pub fn relaxed_distance<T: Real>(q: &[T], x: &[T]) -> Result<T> {
    if q.len() != x.len() {
        return Err(TalrError::Dimension(format!(
            "relaxed codes of width {} and {}",
            q.len(),
            x.len()
        )));
    }
    Ok(half_gap(q, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamming::{binarize_and_pack, hamming_distance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_maps_to_zero_and_alpha_must_be_positive() {
        let a = Matrix::from_rows(&[vec![0.0f64, 0.1]]).unwrap();
        let r = relax_codes(&a, 40.0).unwrap();
        assert_eq!(r.row(0)[0], 0.0);
        assert!((r.row(0)[1] - 4f64.tanh()).abs() < 1e-15);
        assert!((r.row(0)[1] - 0.999329).abs() < 1e-6);
        assert!(relax_codes(&a, 0.0).is_err());
        assert!(relax_codes(&a, -1.0).is_err());
    }

    #[test]
    fn saturation_stays_inside_open_interval() {
        let a = Matrix::from_rows(&[vec![5.0f64, -5.0], vec![1.0, -1.0]]).unwrap();
        for v in relax_codes(&a, 100.0).unwrap().values().as_slice() {
            assert!(v.abs() < 1.0);
        }
        let a32 = a.map(|&v| v as f32);
        for v in relax_codes(&a32, 100.0f32).unwrap().values().as_slice() {
            assert!(v.abs() < 1.0);
        }
    }

    #[test]
    fn large_alpha_recovers_signs_and_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| {
                (0..16)
                    .map(|_| {
                        let v: f64 = rng.random_range(0.05..1.0);
                        if rng.random() {
                            v
                        } else {
                            -v
                        }
                    })
                    .collect()
            })
            .collect();
        let act = Matrix::from_rows(&rows).unwrap();
        let relaxed = relax_codes(&act, 500.0).unwrap();
        let hard = binarize_and_pack(&act).unwrap();
        for i in 0..20 {
            for (j, v) in relaxed.row(i).iter().enumerate() {
                assert_eq!(*v > 0.0, hard.row(i).bit(j));
                assert!(v.abs() >= 0.9999);
            }
            for k in 0..20 {
                let exact = hamming_distance(hard.row(i), hard.row(k)).unwrap() as f64;
                // half of b (1 - 0.9999^2) bounds the gap at this saturation
                assert!(
                    (relaxed.distance(i, k) - exact).abs() <= 0.5 * 16.0 * (1.0 - 0.9998) + 1e-12
                );
            }
        }
    }

    #[test]
    fn distance_extremes_and_dimension_check() {
        let q = [0.9999f64; 8];
        let neg = [-0.9999f64; 8];
        assert!(relaxed_distance(&q, &q).unwrap() < 1e-3);
        assert!((relaxed_distance(&q, &neg).unwrap() - 8.0).abs() < 1e-3);
        assert!(relaxed_distance(&q, &neg[..4]).is_err());
    }

    #[test]
    fn mean_abs_grows_with_alpha() {
        let a = Matrix::from_rows(&[vec![0.3f64, -0.2, 0.05], vec![-0.7, 0.01, 0.4]]).unwrap();
        let mut last = 0.0;
        for alpha in [1.0, 2.0, 5.0, 20.0, 100.0] {
            let m = relax_codes(&a, alpha).unwrap().mean_abs();
            assert!(m >= last);
            last = m;
        }
    }
}
