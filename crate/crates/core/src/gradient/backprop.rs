use crate::error::{Result, TalrError};
use crate::matrix::Matrix;
use crate::relaxed::{soft_bin_slope, RelaxedCodes};
use crate::scalar::Real;

use super::batch::BatchAffinities;
use super::bin_grads::HistogramGradients;

/// `B_{d,v}(i, j) = [A_i(j) = v] δ'_d(d̂_ij)` for every bin and level, dense.
/// Entries are `0` or `±1/Δ`, kept as signs times a shared scale. Storage is
/// ordered `[i][d][v][j]` so that everything row `i` needs is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaMatrices {
    m: usize,
    bins: usize,
    nv: usize,
    scale: f64,
    signs: Vec<i8>,
}

impl BetaMatrices {
    pub fn num_items(&self) -> usize {
        self.m
    }

    pub fn num_bins(&self) -> usize {
        self.bins
    }

    pub fn num_levels(&self) -> usize {
        self.nv
    }

    /// `1/Δ`, the magnitude of every nonzero entry.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Signs of row `i` of `B_{d,v}`.
    pub fn row_signs(&self, i: usize, d: usize, v: usize) -> &[i8] {
        let k = ((i * self.bins + d) * self.nv + v) * self.m;
        &self.signs[k..k + self.m]
    }

    #[inline]
    pub fn get(&self, d: usize, v: usize, i: usize, j: usize) -> f64 {
        f64::from(self.row_signs(i, d, v)[j]) * self.scale
    }
}

pub fn beta_matrices<T: Real>(
    relaxed: &RelaxedCodes<T>,
    affinities: &BatchAffinities,
    slope: f64,
) -> Result<BetaMatrices> {
    let m = check_batch(relaxed, affinities)?;
    let bins = relaxed.num_bits() + 1;
    let nv = affinities.levels().len();
    let mut signs = vec![0i8; bins * nv * m * m];
    for i in 0..m {
        for j in i + 1..m {
            let z = relaxed.distance(i, j).f64();
            let v = affinities.level_index(i, j);
            for d in 0..bins {
                let s = soft_bin_slope(z, d, slope);
                if s != 0.0 {
                    let sign = if s > 0.0 { 1 } else { -1 };
                    signs[((i * bins + d) * nv + v) * m + j] = sign;
                    signs[((j * bins + d) * nv + v) * m + i] = sign;
                }
            }
        }
    }
    Ok(BetaMatrices {
        m,
        bins,
        nv,
        scale: slope.recip(),
        signs,
    })
}

/// Gradient of the minibatch objective with respect to the relaxed codes.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchJacobian {
    /// `∂O/∂Φ̂`, one row per batch item (`M x b`).
    pub d_phi: Matrix<f64>,
    /// `S = sum_{d,v} (A_{d,v} B_{d,v} + B_{d,v} A_{d,v})`, so that
    /// `∂O/∂d̂_ij = S_ij / M` per unordered pair.
    pub pair_weights: Matrix<f64>,
    pub num_defined: usize,
}

fn check_batch<T: Real>(relaxed: &RelaxedCodes<T>, affinities: &BatchAffinities) -> Result<usize> {
    let m = relaxed.num_items();
    if affinities.len() != m {
        return Err(TalrError::Dimension(format!(
            "{} affinity rows for a batch of {m}",
            affinities.len()
        )));
    }
    Ok(m)
}

fn check_grads<T: Real>(
    relaxed: &RelaxedCodes<T>,
    grads: &HistogramGradients,
    nv: usize,
) -> Result<()> {
    if grads.num_queries() != relaxed.num_items()
        || grads.num_bins() != relaxed.num_bits() + 1
        || grads.num_levels() != nv
    {
        return Err(TalrError::Dimension(format!(
            "partials for {} queries x {} bins x {} levels do not fit {} codes of {} bits with {nv} levels",
            grads.num_queries(),
            grads.num_bins(),
            grads.num_levels(),
            relaxed.num_items(),
            relaxed.num_bits()
        )));
    }
    Ok(())
}

/// `∂O/∂Φ̂_j = -1/(2M) sum_i S_ij Φ̂_i`, `M` counting defined queries only.
fn project<T: Real>(
    relaxed: &RelaxedCodes<T>,
    s: Matrix<f64>,
    num_defined: usize,
) -> BatchJacobian {
    let m = relaxed.num_items();
    let b = relaxed.num_bits();
    let mut d_phi = Matrix::zeros(m, b);
    if num_defined > 0 {
        let scale = -0.5 / num_defined as f64;
        for j in 0..m {
            let out = d_phi.row_mut(j);
            // S is symmetric: row j doubles as column j
            for (i, &w) in s.row(j).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (o, x) in out.iter_mut().zip(relaxed.row(i)) {
                    *o += w * x.f64();
                }
            }
            out.iter_mut().for_each(|o| *o *= scale);
        }
    }
    BatchJacobian {
        d_phi,
        pair_weights: s,
        num_defined,
    }
}

/// Matrix form: diagonal products become row and column scalings of each
/// `B_{d,v}`, `O(b |V| M^2)` overall.
pub fn minibatch_backprop<T: Real>(
    relaxed: &RelaxedCodes<T>,
    grads: &HistogramGradients,
    betas: &BetaMatrices,
) -> Result<BatchJacobian> {
    let m = relaxed.num_items();
    check_grads(relaxed, grads, betas.num_levels())?;
    if betas.num_items() != m || betas.num_bins() != grads.num_bins() {
        return Err(TalrError::Dimension(
            "beta matrices do not match the batch".into(),
        ));
    }
    let active: Vec<(usize, usize, &[f64])> = (0..betas.num_bins())
        .flat_map(|d| (0..betas.num_levels()).map(move |v| (d, v)))
        .map(|(d, v)| (d, v, grads.alpha_column(d, v)))
        .filter(|(_, _, a)| a.iter().any(|x| *x != 0.0))
        .collect();
    let mut s = Matrix::zeros(m, m);
    for i in 0..m {
        let orow = &mut s.row_mut(i)[i + 1..];
        for &(d, v, a) in &active {
            let ai = a[i];
            let brow = &betas.row_signs(i, d, v)[i + 1..];
            for ((o, &sign), &aj) in orow.iter_mut().zip(brow).zip(&a[i + 1..]) {
                *o += (ai + aj) * f64::from(sign);
            }
        }
    }
    // B and the weights a_i + a_j are symmetric, so S is too
    let scale = betas.scale();
    for i in 0..m {
        for j in i + 1..m {
            let w = s[(i, j)] * scale;
            s[(i, j)] = w;
            s[(j, i)] = w;
        }
    }
    Ok(project(relaxed, s, grads.num_defined()))
}

/// Same result as [`minibatch_backprop`] without materializing `B`: each
/// pair only touches the two bins adjacent to its distance.
pub fn fused_backprop<T: Real>(
    relaxed: &RelaxedCodes<T>,
    affinities: &BatchAffinities,
    grads: &HistogramGradients,
    slope: f64,
) -> Result<BatchJacobian> {
    let m = check_batch(relaxed, affinities)?;
    check_grads(relaxed, grads, affinities.levels().len())?;
    let bins = grads.num_bins();
    let reach = slope.ceil() as usize;
    let mut s = Matrix::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let z = relaxed.distance(i, j).f64();
            let v = affinities.level_index(i, j);
            let centre = z.round().max(0.0) as usize;
            let lo = centre.saturating_sub(reach);
            let hi = (centre + reach).min(bins - 1);
            let mut w = 0.0;
            for d in lo..=hi {
                let slope_d = soft_bin_slope(z, d, slope);
                if slope_d != 0.0 {
                    w += (grads.alpha(i, d, v) + grads.alpha(j, d, v)) * slope_d;
                }
            }
            s[(i, j)] = w;
            s[(j, i)] = w;
        }
    }
    Ok(project(relaxed, s, grads.num_defined()))
}

/// Direct chain rule, query by query: every `c^(i)_{d,v}` is differentiated
/// with respect to both codes of every pair it depends on.
pub fn naive_backprop<T: Real>(
    relaxed: &RelaxedCodes<T>,
    affinities: &BatchAffinities,
    grads: &HistogramGradients,
    slope: f64,
) -> Result<BatchJacobian> {
    let m = check_batch(relaxed, affinities)?;
    check_grads(relaxed, grads, affinities.levels().len())?;
    let b = relaxed.num_bits();
    let bins = grads.num_bins();
    let mut d_phi = Matrix::zeros(m, b);
    let mut pair = Matrix::zeros(m, m);
    let defined = grads.num_defined();
    if defined == 0 {
        return Ok(BatchJacobian {
            d_phi,
            pair_weights: pair,
            num_defined: 0,
        });
    }
    let inv_m = 1.0 / defined as f64;
    for q in 0..m {
        if grads.values()[q].is_none() {
            continue;
        }
        for x in 0..m {
            if x == q {
                continue;
            }
            let z = relaxed.distance(q, x).f64();
            let v = affinities.level_index(q, x);
            // ∂O^(q)/∂d̂_qx
            let mut g = 0.0;
            for d in 0..bins {
                g += grads.alpha(q, d, v) * soft_bin_slope(z, d, slope);
            }
            pair[(q, x)] += g;
            pair[(x, q)] += g;
            // d̂_qx = (b - <Φ̂_q, Φ̂_x>) / 2
            for k in 0..b {
                d_phi[(x, k)] -= 0.5 * inv_m * g * relaxed.row(q)[k].f64();
                d_phi[(q, k)] -= 0.5 * inv_m * g * relaxed.row(x)[k].f64();
            }
        }
    }
    Ok(BatchJacobian {
        d_phi,
        pair_weights: pair,
        num_defined: defined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::LevelSet;
    use crate::gradient::bin_grads::objective_bin_grads;
    use crate::relaxed::{soft_histograms_from_distances, Objective, RelaxOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(
        rng: &mut ChaCha8Rng,
        m: usize,
        b: usize,
        nv: usize,
    ) -> (RelaxedCodes<f64>, BatchAffinities) {
        let vals = (0..m * b).map(|_| rng.random_range(-0.99..0.99)).collect();
        let codes = RelaxedCodes::from_values(Matrix::from_vec(m, b, vals).unwrap(), 1.0).unwrap();
        let levels = LevelSet::range(nv as u32 - 1);
        let aff =
            BatchAffinities::from_fn(levels, m, |_, _| Ok(rng.random_range(0..nv as u32))).unwrap();
        (codes, aff)
    }

    fn grads_for(
        obj: Objective,
        codes: &RelaxedCodes<f64>,
        aff: &BatchAffinities,
    ) -> HistogramGradients {
        let m = codes.num_items();
        let d = codes.distance_matrix();
        let qs = (0..m)
            .map(|i| {
                let t = aff.target(i, obj)?;
                let s = soft_histograms_from_distances(
                    d.row(i),
                    aff.level_row(i),
                    Some(i),
                    aff.levels(),
                    codes.num_bits(),
                    1.0,
                )
                .unwrap();
                Some(objective_bin_grads(obj, &s, t, &RelaxOptions::default()).unwrap())
            })
            .collect();
        HistogramGradients::from_queries(codes.num_bits() + 1, aff.levels().len(), qs).unwrap()
    }

    #[test]
    fn beta_kink_and_edge_values() {
        // b = 2: codes chosen so that d̂ = 1 exactly, then 0.5
        let codes = RelaxedCodes::from_values(
            Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap(),
            1.0,
        )
        .unwrap();
        let aff = BatchAffinities::from_values(LevelSet::binary(), 2, vec![0, 1, 1, 0]).unwrap();
        let z = codes.distance(0, 1);
        assert_eq!(z, 0.75);
        let b = beta_matrices(&codes, &aff, 1.0).unwrap();
        // d̂ = 0.75 lies on the rising edge of bin 1 and the falling edge of bin 0
        assert_eq!(b.get(1, 1, 0, 1), 1.0);
        assert_eq!(b.get(0, 1, 0, 1), -1.0);
        assert_eq!(b.get(1, 0, 0, 1), 0.0);

        let codes = RelaxedCodes::from_values(
            Matrix::from_rows(&[vec![0.0, 0.5], vec![0.0, 0.5]]).unwrap(),
            1.0,
        )
        .unwrap();
        assert_eq!(codes.distance(0, 1), 0.875);
        let codes = RelaxedCodes::from_values(
            Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap(),
            1.0,
        )
        .unwrap();
        let b = beta_matrices(&codes, &aff, 1.0).unwrap();
        // d̂ = 1 sits on the peak of bin 1 and the feet of bins 0 and 2
        for d in 0..3 {
            assert_eq!(b.get(d, 1, 0, 1), 0.0);
        }
    }

    #[test]
    fn beta_structure_against_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let (codes, aff) = random_batch(&mut rng, 8, 6, 3);
        let b = beta_matrices(&codes, &aff, 1.0).unwrap();
        for d in 0..7 {
            for v in 0..3 {
                for i in 0..8 {
                    assert_eq!(b.get(d, v, i, i), 0.0);
                    for j in 0..8 {
                        assert_eq!(b.get(d, v, i, j), b.get(d, v, j, i));
                        let z = codes.distance(i, j);
                        let expect = if i != j
                            && aff.level_index(i, j) == v
                            && (z - d as f64).abs() < 1.0
                            && z != d as f64
                        {
                            if z < d as f64 {
                                1.0
                            } else {
                                -1.0
                            }
                        } else {
                            0.0
                        };
                        assert_eq!(b.get(d, v, i, j), expect);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_partials_give_zero_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (codes, aff) = random_batch(&mut rng, 5, 4, 2);
        let g = HistogramGradients::from_queries(5, 2, vec![None; 5]).unwrap();
        let j = minibatch_backprop(&codes, &g, &beta_matrices(&codes, &aff, 1.0).unwrap()).unwrap();
        assert!(j.d_phi.as_slice().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn three_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for trial in 0..40 {
            let m = 2 + trial % 15;
            let nv = 2 + trial % 3;
            let (codes, aff) = random_batch(&mut rng, m, 8, nv);
            for obj in Objective::ALL {
                let g = grads_for(obj, &codes, &aff);
                let betas = beta_matrices(&codes, &aff, 1.0).unwrap();
                let a = minibatch_backprop(&codes, &g, &betas).unwrap();
                let f = fused_backprop(&codes, &aff, &g, 1.0).unwrap();
                let n = naive_backprop(&codes, &aff, &g, 1.0).unwrap();
                for ((x, y), z) in a
                    .d_phi
                    .as_slice()
                    .iter()
                    .zip(f.d_phi.as_slice())
                    .zip(n.d_phi.as_slice())
                {
                    assert!(
                        (x - z).abs() <= 1e-10 && (y - z).abs() <= 1e-10,
                        "{obj} m={m}: {x} {y} {z}"
                    );
                }
            }
        }
    }
}
