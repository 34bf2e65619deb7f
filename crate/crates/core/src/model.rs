//! Linear hash functions `f(x) = W x (+ b)` and their checkpoint format.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::binio::{put_f64, put_u32, to_u32, ByteReader};
use crate::error::{Result, TalrError};
use crate::hamming::{binarize_and_pack, BinaryCodebook};
use crate::matrix::Matrix;
use crate::relaxed::{relax_codes, RelaxedCodes};
use crate::scalar::Real;

const MODEL_MAGIC: &[u8; 8] = b"TALRMODL";
const MODEL_VERSION: u32 = 1;

/// `b` linear hash functions over `D`-dimensional inputs. With a bias the
/// weight matrix carries it as an extra last column.
#[derive(Debug, Clone, PartialEq)]
pub struct HashModel<T> {
    weights: Matrix<T>,
    input_dim: usize,
    has_bias: bool,
    alpha: f64,
}

impl<T: Real> HashModel<T> {
    pub fn from_weights(weights: Matrix<T>, has_bias: bool, alpha: f64) -> Result<Self> {
        if weights.rows() == 0 {
            return Err(TalrError::InvalidInput(
                "a hash model needs at least one bit".into(),
            ));
        }
        if has_bias && weights.cols() == 0 {
            return Err(TalrError::Dimension("bias column missing".into()));
        }
        if weights.as_slice().iter().any(|w| !w.is_finite()) {
            return Err(TalrError::InvalidInput("non-finite weight".into()));
        }
        let input_dim = weights.cols() - usize::from(has_bias);
        Ok(Self {
            weights,
            input_dim,
            has_bias,
            alpha,
        })
    }

    /// Weights drawn from `N(0, 1/D)`, bias zero.
    pub fn random<R: Rng + ?Sized>(
        num_bits: usize,
        input_dim: usize,
        has_bias: bool,
        alpha: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if num_bits == 0 || input_dim == 0 {
            return Err(TalrError::InvalidInput(format!(
                "model shape {num_bits} x {input_dim} must be nonzero"
            )));
        }
        let normal = Normal::new(0.0, 1.0 / (input_dim as f64).sqrt())
            .map_err(|e| TalrError::Numeric(e.to_string()))?;
        let cols = input_dim + usize::from(has_bias);
        let mut weights = Matrix::zeros(num_bits, cols);
        for k in 0..num_bits {
            for c in 0..input_dim {
                weights[(k, c)] = T::of(normal.sample(rng));
            }
        }
        Self::from_weights(weights, has_bias, alpha)
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Matrix<T> {
        &mut self.weights
    }

    pub fn num_bits(&self) -> usize {
        self.weights.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn has_bias(&self) -> bool {
        self.has_bias
    }

    /// Current tanh scale.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.alpha = alpha;
    }

    fn check_input(&self, features: &Matrix<T>) -> Result<()> {
        if features.cols() != self.input_dim {
            return Err(TalrError::Dimension(format!(
                "model expects {} features, got {}",
                self.input_dim,
                features.cols()
            )));
        }
        Ok(())
    }

    /// Activations `f(x)` for every row of `features`, `N x b`.
    pub fn activations(&self, features: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(features)?;
        let b = self.num_bits();
        let mut out = Matrix::zeros(features.rows(), b);
        for (i, x) in features.iter_rows().enumerate() {
            let row = out.row_mut(i);
            for (k, slot) in row.iter_mut().enumerate() {
                let w = self.weights.row(k);
                let mut acc: T = w.iter().zip(x).map(|(a, b)| *a * *b).sum();
                if self.has_bias {
                    acc += w[self.input_dim];
                }
                *slot = acc;
            }
        }
        Ok(out)
    }

    /// `tanh(alpha f(x))` at the model's current scale.
    pub fn relaxed_codes(&self, features: &Matrix<T>) -> Result<RelaxedCodes<T>> {
        relax_codes(&self.activations(features)?, T::of(self.alpha))
    }

    /// Binary codes `sgn(f(x))`.
    pub fn encode(&self, features: &Matrix<T>) -> Result<BinaryCodebook> {
        binarize_and_pack(&self.activations(features)?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(29 + 8 * (self.weights.as_slice().len() + 1));
        out.extend_from_slice(MODEL_MAGIC);
        put_u32(&mut out, MODEL_VERSION);
        put_u32(&mut out, to_u32(self.num_bits(), "num_bits")?);
        put_u32(&mut out, to_u32(self.input_dim, "input_dim")?);
        out.push(u8::from(self.has_bias));
        for w in self.weights.as_slice() {
            put_f64(&mut out, w.f64());
        }
        put_f64(&mut out, self.alpha);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(MODEL_MAGIC)?;
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(TalrError::Format(format!(
                "unsupported model version {version}"
            )));
        }
        let b = r.u32()? as usize;
        let d = r.u32()? as usize;
        let has_bias = match r.u8()? {
            0 => false,
            1 => true,
            other => {
                return Err(TalrError::Format(format!(
                    "bias flag {other} at offset {}",
                    r.position() - 1
                )))
            }
        };
        let cols = d + usize::from(has_bias);
        let mut data = Vec::with_capacity(b * cols);
        for _ in 0..b * cols {
            data.push(T::of(r.f64()?));
        }
        let alpha = r.f64()?;
        r.finish()?;
        Self::from_weights(Matrix::from_vec(b, cols, data)?, has_bias, alpha)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn cast<U: Real>(&self) -> HashModel<U> {
        HashModel {
            weights: self.weights.map(|w| U::of(w.f64())),
            input_dim: self.input_dim,
            has_bias: self.has_bias,
            alpha: self.alpha,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for bias in [false, true] {
            let m = HashModel::<f64>::random(5, 7, bias, 3.5, &mut rng).unwrap();
            let back = HashModel::<f64>::from_bytes(&m.to_bytes().unwrap()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn checkpoint_layout() {
        let w = Matrix::from_vec(1, 2, vec![1.5f64, -2.0]).unwrap();
        let m = HashModel::from_weights(w, true, 40.0).unwrap();
        let bytes = m.to_bytes().unwrap();
        assert_eq!(&bytes[..8], b"TALRMODL");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &1u32.to_le_bytes());
        assert_eq!(bytes[20], 1);
        assert_eq!(&bytes[21..29], &1.5f64.to_le_bytes());
        assert_eq!(&bytes[bytes.len() - 8..], &40.0f64.to_le_bytes());
    }

    #[test]
    fn truncated_checkpoint_names_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = HashModel::<f64>::random(2, 3, false, 1.0, &mut rng).unwrap();
        let bytes = m.to_bytes().unwrap();
        let err = HashModel::<f64>::from_bytes(&bytes[..30]).unwrap_err();
        assert!(
            matches!(err, TalrError::Truncated { offset: 30, .. }),
            "{err}"
        );
    }

    #[test]
    fn activations_and_codes() {
        let w = Matrix::from_rows(&[vec![1.0f64, 0.0, 0.5], vec![0.0, -1.0, 0.0]]).unwrap();
        let m = HashModel::from_weights(w, true, 1.0).unwrap();
        let x = Matrix::from_rows(&[vec![2.0, 3.0], vec![-1.0, -1.0]]).unwrap();
        let a = m.activations(&x).unwrap();
        assert_eq!(a.as_slice(), &[2.5, -3.0, -0.5, 1.0]);
        let codes = m.encode(&x).unwrap();
        assert!(codes.row(0).bit(0) && !codes.row(0).bit(1));
        assert!(!codes.row(1).bit(0) && codes.row(1).bit(1));
        assert!(m.activations(&Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn init_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = HashModel::<f64>::random(64, 100, false, 1.0, &mut rng).unwrap();
        let var = m.weights().as_slice().iter().map(|w| w * w).sum::<f64>() / 6400.0;
        assert!((var - 0.01).abs() < 0.001, "{var}");
    }
}
