//! Positive random features for the softmax kernel and linear-time attention.
//!
//! `φ(x) = exp(Wx − ‖x‖²/2) / √m` with `W` standard normal gives
//! `E[φ(q)ᵀφ(k)] = exp(qᵀk)` with every feature strictly positive.

use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix};
use crate::rng::{self, Rng};
use crate::scalar::Real;

/// Random projection `W ∈ ℝ^{m×d}` defining one draw of the feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    w: DenseMatrix<T>,
    seed: Option<u64>,
}

/// Samples `W` with i.i.d. standard-normal entries. The same `(d, m, seed)`
/// reproduces `W` bit for bit.
pub fn make_feature_map<T: Real>(d: usize, m: usize, seed: u64) -> Result<FeatureMap<T>> {
    if d == 0 || m == 0 {
        return Err(Error::InvalidParameter(format!(
            "feature map needs d >= 1 and m >= 1, got d={d}, m={m}"
        )));
    }
    let mut r = rng::stream(seed, 0);
    Ok(FeatureMap {
        w: rng::gaussian_matrix(m, d, &mut r),
        seed: Some(seed),
    })
}

impl<T: Real> FeatureMap<T> {
    /// Feature map with explicit weights, rows are the `m` projections.
    pub fn from_weights(w: DenseMatrix<T>) -> Result<Self> {
        if w.rows() == 0 || w.cols() == 0 {
            return Err(Error::InvalidParameter(
                "feature weights must be nonempty".into(),
            ));
        }
        Ok(Self { w, seed: None })
    }

    /// Draws a fresh map from an existing generator (Monte-Carlo loops).
    pub fn sample(d: usize, m: usize, rng: &mut Rng) -> Self {
        Self {
            w: rng::gaussian_matrix(m, d, rng),
            seed: None,
        }
    }

    pub fn features(&self) -> usize {
        self.w.rows()
    }

    pub fn dim(&self) -> usize {
        self.w.cols()
    }

    pub fn weights(&self) -> &DenseMatrix<T> {
        &self.w
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Writes `φ(x)` into `out`. `row` only labels the error.
    pub fn phi_into(&self, x: &[T], row: usize, out: &mut [T]) -> Result<()> {
        debug_assert_eq!(x.len(), self.dim());
        let half_sq = dot(x, x) / T::of(2.0);
        let inv_sqrt_m = T::one() / T::of_usize(self.features()).sqrt();
        for (r, o) in out.iter_mut().enumerate() {
            let exponent = dot(self.w.row(r), x) - half_sq;
            if exponent > T::exp_limit() {
                return Err(Error::ExpOverflow {
                    row,
                    col: r,
                    exponent: exponent.as_f64(),
                });
            }
            *o = exponent.exp() * inv_sqrt_m;
        }
        Ok(())
    }

    pub fn phi(&self, x: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.features()];
        self.phi_into(x, 0, &mut out)?;
        Ok(out)
    }

    /// `φ(Q)` and `φ(K)` under this map.
    pub fn factors(&self, q: &DenseMatrix<T>, k: &DenseMatrix<T>) -> Result<LowRankFactors<T>> {
        Ok(LowRankFactors {
            qt: apply_features(self, q)?,
            kt: apply_features(self, k)?,
        })
    }
}

/// Applies `φ` to every row of `x`.
pub fn apply_features<T: Real>(map: &FeatureMap<T>, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if x.cols() != map.dim() {
        return Err(Error::mismatch(
            "apply_features",
            format!("input has {} columns, map expects {}", x.cols(), map.dim()),
        ));
    }
    let m = map.features();
    let mut out = DenseMatrix::zeros(x.rows(), m);
    for i in 0..x.rows() {
        let (src, dst) = (x.row(i), &mut out.as_mut_slice()[i * m..(i + 1) * m]);
        map.phi_into(src, i, dst)?;
    }
    Ok(out)
}

/// Feature-space queries `Q̃` and keys `K̃`.
#[derive(Debug, Clone)]
pub struct LowRankFactors<T> {
    qt: DenseMatrix<T>,
    kt: DenseMatrix<T>,
}

impl<T: Real> LowRankFactors<T> {
    /// Wraps precomputed factors; both must have the same feature count and
    /// strictly positive entries.
    pub fn new(qt: DenseMatrix<T>, kt: DenseMatrix<T>) -> Result<Self> {
        if qt.cols() != kt.cols() {
            return Err(Error::mismatch(
                "LowRankFactors",
                format!("{} vs {} features", qt.cols(), kt.cols()),
            ));
        }
        if qt
            .as_slice()
            .iter()
            .chain(kt.as_slice())
            .any(|&x| x <= T::zero())
        {
            return Err(Error::InvalidParameter(
                "feature factors must be positive".into(),
            ));
        }
        Ok(Self { qt, kt })
    }

    pub fn qt(&self) -> &DenseMatrix<T> {
        &self.qt
    }

    pub fn kt(&self) -> &DenseMatrix<T> {
        &self.kt
    }

    /// `φ(q_i)ᵀφ(k_j)`.
    pub fn entry(&self, i: usize, j: usize) -> T {
        dot(self.qt.row(i), self.kt.row(j))
    }
}

/// `(Q̃K̃ᵀ)V` and `(Q̃K̃ᵀ)1` without forming the `n_q × n_k` product.
///
/// Non-causal: `Q̃(K̃ᵀV)`. Causal: running prefix sums of `k̃_j ⊗ v_j` and
/// `k̃_j`, so row `i` only sees keys `j ≤ i`.
pub fn lowrank_attention<T: Real>(
    factors: &LowRankFactors<T>,
    v: &DenseMatrix<T>,
    causal: bool,
) -> Result<(DenseMatrix<T>, Vec<T>)> {
    let (qt, kt) = (&factors.qt, &factors.kt);
    if kt.rows() != v.rows() {
        return Err(Error::mismatch(
            "lowrank_attention",
            format!("K̃ has {} rows, V has {}", kt.rows(), v.rows()),
        ));
    }
    if causal && qt.rows() != kt.rows() {
        return Err(Error::mismatch(
            "lowrank_attention",
            "causal mode needs n_q == n_k",
        ));
    }
    let (m, dv) = (qt.cols(), v.cols());
    let mut out = DenseMatrix::zeros(qt.rows(), dv);
    let mut norm = vec![T::zero(); qt.rows()];

    if !causal {
        let kv = kt.t_matmul(v)?;
        let ksum: Vec<T> = (0..m)
            .map(|r| kt.as_slice()[r..].iter().step_by(m).copied().sum())
            .collect();
        for i in 0..qt.rows() {
            let q = qt.row(i);
            norm[i] = dot(q, &ksum);
            let o = out.row_mut(i);
            for (r, &qr) in q.iter().enumerate() {
                for (x, &kvr) in o.iter_mut().zip(kv.row(r)) {
                    *x += qr * kvr;
                }
            }
        }
        return Ok((out, norm));
    }

    let mut kv = vec![T::zero(); m * dv];
    let mut ksum = vec![T::zero(); m];
    for i in 0..qt.rows() {
        let k = kt.row(i);
        let vi = v.row(i);
        for (r, &kr) in k.iter().enumerate() {
            ksum[r] += kr;
            for (acc, &x) in kv[r * dv..(r + 1) * dv].iter_mut().zip(vi) {
                *acc += kr * x;
            }
        }
        let q = qt.row(i);
        norm[i] = dot(q, &ksum);
        let o = out.row_mut(i);
        for (r, &qr) in q.iter().enumerate() {
            for (x, &acc) in o.iter_mut().zip(&kv[r * dv..(r + 1) * dv]) {
                *x += qr * acc;
            }
        }
    }
    Ok((out, norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genmodel::gaussian_batch;

    #[test]
    fn deterministic_per_seed() {
        let a = make_feature_map::<f64>(2, 4, 7).unwrap();
        let b = make_feature_map::<f64>(2, 4, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            a.weights(),
            make_feature_map::<f64>(2, 4, 8).unwrap().weights()
        );
    }

    #[test]
    fn weights_look_standard_normal() {
        let map = make_feature_map::<f64>(3, 10_000, 1).unwrap();
        let w = map.weights().as_slice();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.05, "{mean}");
        assert!(mean.abs() < 4.0 / n.sqrt());
        assert!(var > 0.9 && var < 1.1, "{var}");
    }

    #[test]
    fn single_draw_is_finite() {
        let map = make_feature_map::<f64>(1, 1, 0).unwrap();
        assert!(map.weights()[(0, 0)].is_finite());
        assert!(make_feature_map::<f64>(0, 1, 0).is_err());
    }

    #[test]
    fn zero_vector_features() {
        let map = make_feature_map::<f64>(5, 16, 3).unwrap();
        let phi = map.phi(&[0.0; 5]).unwrap();
        assert!(phi.iter().all(|&x| x == 0.25));
        assert_eq!(dot(&phi, &phi), 1.0);
    }

    #[test]
    fn scalar_hand_arithmetic() {
        let map =
            FeatureMap::from_weights(DenseMatrix::<f64>::from_rows(&[&[1.0]]).unwrap()).unwrap();
        let x = DenseMatrix::from_rows(&[&[2.0]]).unwrap();
        assert_eq!(apply_features(&map, &x).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn overflow_is_reported() {
        let map =
            FeatureMap::from_weights(DenseMatrix::<f64>::from_rows(&[&[800.0]]).unwrap()).unwrap();
        let x = DenseMatrix::from_rows(&[&[0.0], &[1.0]]).unwrap();
        assert!(matches!(
            apply_features(&map, &x),
            Err(Error::ExpOverflow { row: 1, col: 0, .. })
        ));
    }

    #[test]
    fn rank_one_all_ones() {
        let ones = DenseMatrix::<f64>::filled(2, 1, 1.0);
        let f = LowRankFactors::new(ones.clone(), ones).unwrap();
        let v = DenseMatrix::identity(2);
        let (o, d) = lowrank_attention(&f, &v, false).unwrap();
        assert_eq!(o.as_slice(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(d, vec![2.0, 2.0]);
        let (o, d) = lowrank_attention(&f, &v, true).unwrap();
        assert_eq!(o.as_slice(), &[1.0, 0.0, 1.0, 1.0]);
        assert_eq!(d, vec![1.0, 2.0]);
    }

    #[test]
    fn matches_materialized_product() {
        let b = gaussian_batch::<f64>(32, 32, 6, 5, 4, false).unwrap();
        let map = make_feature_map(6, 8, 12).unwrap();
        let f = map.factors(b.q(), b.k()).unwrap();
        let a = f.qt().matmul_t(f.kt()).unwrap();
        for causal in [false, true] {
            let mut masked = a.clone();
            if causal {
                for i in 0..32 {
                    for j in i + 1..32 {
                        masked[(i, j)] = 0.0;
                    }
                }
            }
            let want_o = masked.matmul(b.v()).unwrap();
            let want_d = masked.row_sums();
            let (o, d) = lowrank_attention(&f, b.v(), causal).unwrap();
            assert!(o.sub(&want_o).unwrap().max_abs() < 1e-10);
            for (x, y) in d.iter().zip(&want_d) {
                assert!((x - y).abs() < 1e-10 && *x > 0.0);
            }
        }
    }

    #[test]
    fn causal_rows_ignore_future_keys() {
        let b = gaussian_batch::<f64>(10, 10, 4, 3, 8, true).unwrap();
        let map = make_feature_map(4, 6, 2).unwrap();
        let f = map.factors(b.q(), b.k()).unwrap();
        let (o, d) = lowrank_attention(&f, b.v(), true).unwrap();
        let mut kt = f.kt().clone();
        let mut v = b.v().clone();
        for j in 6..10 {
            kt.row_mut(j).iter_mut().for_each(|x| *x *= 3.0);
            v.row_mut(j).iter_mut().for_each(|x| *x = -*x + 1.0);
        }
        let f2 = LowRankFactors::new(f.qt().clone(), kt).unwrap();
        let (o2, d2) = lowrank_attention(&f2, &v, true).unwrap();
        for i in 0..6 {
            assert_eq!(o.row(i), o2.row(i));
            assert_eq!(d[i], d2[i]);
        }
    }
}
