//! Cross-polytope LSH and the subtraction-corrected sparse component.
//!
//! A round hashes `x` to the signed coordinate axis closest to `R_l x`, where
//! `R_l` is a Haar-random rotation (orthonormal factor of a Gaussian matrix).
//! Codes are indices in `0..2d`: `a` for `+e_a`, `d + a` for `−e_a`. The code
//! is invariant to the length of `x`, so hashing `x` and `x/‖x‖` agree; a zero
//! row has every projection equal to zero and resolves to code `0`.
//!
//! A query and a key land in the support when their codes agree in at least
//! one round.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{FeatureMap, LowRankFactors};
use crate::linalg::orthonormal_columns;
use crate::matrix::{dot, DenseMatrix};
use crate::rng::{self, Rng};
use crate::scalar::Real;

/// `L` rounds of cross-polytope hashing in dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct HashFamily<T> {
    d: usize,
    rotations: Vec<DenseMatrix<T>>,
    seed: Option<u64>,
}

impl<T: Real> HashFamily<T> {
    /// Round `l` draws its rotation from stream `l` of `seed`, so a family with
    /// more rounds extends one with fewer.
    pub fn new(d: usize, rounds: usize, seed: u64) -> Result<Self> {
        if d == 0 || rounds == 0 {
            return Err(Error::InvalidParameter(format!(
                "hash family needs d >= 1 and at least one round, got d={d}, rounds={rounds}"
            )));
        }
        let mut family = Self {
            d,
            rotations: Vec::with_capacity(rounds),
            seed: Some(seed),
        };
        family.extend_to(rounds);
        Ok(family)
    }

    /// Family with caller-supplied rotations (rows are the rotated axes).
    pub fn from_rotations(rotations: Vec<DenseMatrix<T>>) -> Result<Self> {
        let d = rotations.first().map(|r| r.rows()).unwrap_or(0);
        if d == 0 {
            return Err(Error::InvalidParameter(
                "need at least one nonempty rotation".into(),
            ));
        }
        let tol = T::epsilon().sqrt();
        for (l, r) in rotations.iter().enumerate() {
            if r.shape() != (d, d) {
                return Err(Error::mismatch(
                    "HashFamily",
                    format!("rotation {l} is not {d}x{d}"),
                ));
            }
            let g = r.matmul_t(r)?;
            let defect = (0..d)
                .flat_map(|i| (0..d).map(move |j| (i, j)))
                .map(|(i, j)| (g[(i, j)] - if i == j { T::one() } else { T::zero() }).abs())
                .fold(T::zero(), T::max);
            if defect > tol {
                return Err(Error::InvalidParameter(format!(
                    "rotation {l} is not orthonormal"
                )));
            }
        }
        Ok(Self {
            d,
            rotations,
            seed: None,
        })
    }

    /// Appends rounds until the family has `rounds` of them. No-op for
    /// families built from explicit rotations.
    pub fn extend_to(&mut self, rounds: usize) {
        let Some(seed) = self.seed else { return };
        while self.rotations.len() < rounds {
            let mut r = rng::stream(seed, self.rotations.len() as u64);
            let g: DenseMatrix<T> = rng::gaussian_matrix(self.d, self.d, &mut r);
            // rows of the stored matrix are the columns of the orthonormal factor
            self.rotations.push(orthonormal_columns(&g).transpose());
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rounds(&self) -> usize {
        self.rotations.len()
    }

    pub fn rotation(&self, round: usize) -> &DenseMatrix<T> {
        &self.rotations[round]
    }

    /// Bits needed for one round's code, `⌈log2(2d)⌉`.
    pub fn code_bits(&self) -> u32 {
        (2 * self.d).next_power_of_two().trailing_zeros()
    }

    fn code(&self, round: usize, x: &[T]) -> u32 {
        let r = &self.rotations[round];
        signed_argmax((0..self.d).map(|a| dot(r.row(a), x)))
    }
}

/// Index of the largest entry of `[y, −y]`; the first maximum wins.
fn signed_argmax<T: Real>(y: impl Iterator<Item = T>) -> u32 {
    let y: Vec<T> = y.collect();
    let d = y.len();
    let mut best = 0usize;
    let mut best_val = T::neg_infinity();
    for (a, &v) in y.iter().enumerate() {
        if v > best_val {
            best = a;
            best_val = v;
        }
    }
    for (a, &v) in y.iter().enumerate() {
        if -v > best_val {
            best = d + a;
            best_val = -v;
        }
    }
    best as u32
}

/// Per-row codes, `rounds` per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashCodes {
    rounds: usize,
    codes: Vec<u32>,
}

impl HashCodes {
    pub fn rows(&self) -> usize {
        self.codes.len().checked_div(self.rounds).unwrap_or(0)
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.codes[i * self.rounds..(i + 1) * self.rounds]
    }

    pub fn get(&self, i: usize, round: usize) -> u32 {
        self.codes[i * self.rounds + round]
    }

    pub(crate) fn round_column(&self, round: usize) -> Vec<u32> {
        (0..self.rows()).map(|i| self.get(i, round)).collect()
    }
}

pub fn hash_codes<T: Real>(family: &HashFamily<T>, x: &DenseMatrix<T>) -> Result<HashCodes> {
    if x.cols() != family.dim() {
        return Err(Error::mismatch(
            "hash_codes",
            format!(
                "input has {} columns, family expects {}",
                x.cols(),
                family.dim()
            ),
        ));
    }
    let rounds = family.rounds();
    let codes = (0..x.rows())
        .flat_map(|i| (0..rounds).map(move |l| family.code(l, x.row(i))))
        .collect();
    Ok(HashCodes { rounds, codes })
}

/// Sorted, duplicate-free `(query, key)` index pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportSet {
    n_q: usize,
    n_k: usize,
    pairs: Vec<(u32, u32)>,
}

impl SupportSet {
    pub fn from_pairs(n_q: usize, n_k: usize, mut pairs: Vec<(u32, u32)>) -> Result<Self> {
        if let Some(&(i, j)) = pairs
            .iter()
            .find(|&&(i, j)| i as usize >= n_q || j as usize >= n_k)
        {
            return Err(Error::InvalidParameter(format!(
                "pair ({i}, {j}) out of range for {n_q}x{n_k}"
            )));
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(Self { n_q, n_k, pairs })
    }

    pub fn empty(n_q: usize, n_k: usize) -> Self {
        Self {
            n_q,
            n_k,
            pairs: Vec::new(),
        }
    }

    /// Every pair, or every pair with `j ≤ i` when causal.
    pub fn full(n_q: usize, n_k: usize, causal: bool) -> Self {
        let pairs = (0..n_q as u32)
            .flat_map(|i| {
                let end = if causal {
                    (i as usize + 1).min(n_k)
                } else {
                    n_k
                };
                (0..end as u32).map(move |j| (i, j))
            })
            .collect();
        Self { n_q, n_k, pairs }
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn n_k(&self) -> usize {
        self.n_k
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.pairs.binary_search(&(i as u32, j as u32)).is_ok()
    }

    pub fn transpose(&self) -> Self {
        let mut pairs: Vec<_> = self.pairs.iter().map(|&(i, j)| (j, i)).collect();
        pairs.sort_unstable();
        Self {
            n_q: self.n_k,
            n_k: self.n_q,
            pairs,
        }
    }

    pub fn is_lower_triangular(&self) -> bool {
        self.pairs.iter().all(|&(i, j)| j <= i)
    }

    pub(crate) fn union_packed(n_q: usize, n_k: usize, mut packed: Vec<u64>) -> Self {
        packed.sort_unstable();
        packed.dedup();
        let pairs = packed
            .into_iter()
            .map(|p| ((p >> 32) as u32, p as u32))
            .collect();
        Self { n_q, n_k, pairs }
    }
}

/// Pairs produced by one round, packed as `i << 32 | j`.
pub(crate) fn round_pairs(
    q_codes: &[u32],
    k_codes: &[u32],
    buckets: usize,
    causal: bool,
    max_bucket: Option<usize>,
) -> Vec<u64> {
    // counting sort of keys by code keeps ascending j inside each bucket
    let mut start = vec![0usize; buckets + 1];
    for &c in k_codes {
        start[c as usize + 1] += 1;
    }
    for b in 0..buckets {
        start[b + 1] += start[b];
    }
    let mut fill = start.clone();
    let mut keys = vec![0u32; k_codes.len()];
    for (j, &c) in k_codes.iter().enumerate() {
        keys[fill[c as usize]] = j as u32;
        fill[c as usize] += 1;
    }
    let mut out = Vec::new();
    for (i, &c) in q_codes.iter().enumerate() {
        let bucket = &keys[start[c as usize]..start[c as usize + 1]];
        let bucket = match max_bucket {
            Some(cap) => &bucket[..bucket.len().min(cap)],
            None => bucket,
        };
        for &j in bucket {
            if causal && j as usize > i {
                // keys are ascending, nothing later is visible either
                break;
            }
            out.push(((i as u64) << 32) | j as u64);
        }
    }
    out
}

/// Collision support of `Q` against `K` under `family`.
///
/// `(i, j)` is included when the codes agree in at least one round. With
/// `max_bucket`, each round keeps only the first `max_bucket` keys (by
/// ascending index) of every bucket. Causal supports keep `j ≤ i`.
pub fn build_support<T: Real>(
    family: &HashFamily<T>,
    q: &DenseMatrix<T>,
    k: &DenseMatrix<T>,
    causal: bool,
    max_bucket: Option<usize>,
) -> Result<SupportSet> {
    let qc = hash_codes(family, q)?;
    let kc = hash_codes(family, k)?;
    Ok(support_from_codes(
        &qc,
        &kc,
        2 * family.dim(),
        causal,
        max_bucket,
    ))
}

pub(crate) fn support_from_codes(
    qc: &HashCodes,
    kc: &HashCodes,
    buckets: usize,
    causal: bool,
    max_bucket: Option<usize>,
) -> SupportSet {
    let per_round: Vec<Vec<u64>> = (0..qc.rounds())
        .into_par_iter()
        .map(|l| {
            round_pairs(
                &qc.round_column(l),
                &kc.round_column(l),
                buckets,
                causal,
                max_bucket,
            )
        })
        .collect();
    SupportSet::union_packed(qc.rows(), kc.rows(), per_round.concat())
}

/// Sparse matrix `S` on a support set holding `exp(q_iᵀk_j) − φ(q_i)ᵀφ(k_j)`.
#[derive(Debug, Clone)]
pub struct SparseCorrection<T> {
    support: SupportSet,
    values: Vec<T>,
}

impl<T: Real> SparseCorrection<T> {
    pub fn support(&self) -> &SupportSet {
        &self.support
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.support
            .pairs
            .iter()
            .zip(&self.values)
            .map(|(&(i, j), &v)| (i as usize, j as usize, v))
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(self.support.n_q, self.support.n_k);
        for (i, j, v) in self.iter() {
            m[(i, j)] = v;
        }
        m
    }
}

/// Builds `S` on `support`, computing the feature factors from `map`.
pub fn build_correction<T: Real>(
    support: SupportSet,
    q: &DenseMatrix<T>,
    k: &DenseMatrix<T>,
    map: &FeatureMap<T>,
) -> Result<SparseCorrection<T>> {
    let factors = map.factors(q, k)?;
    build_correction_with_factors(support, q, k, &factors)
}

/// Builds `S` from factors that the caller already computed with the same map
/// used for the low-rank pass.
pub fn build_correction_with_factors<T: Real>(
    support: SupportSet,
    q: &DenseMatrix<T>,
    k: &DenseMatrix<T>,
    factors: &LowRankFactors<T>,
) -> Result<SparseCorrection<T>> {
    if support.n_q != q.rows() || support.n_k != k.rows() {
        return Err(Error::mismatch(
            "build_correction",
            format!(
                "support is {}x{}, inputs are {}x{}",
                support.n_q,
                support.n_k,
                q.rows(),
                k.rows()
            ),
        ));
    }
    if factors.qt().rows() != q.rows() || factors.kt().rows() != k.rows() {
        return Err(Error::mismatch(
            "build_correction",
            "factors do not match Q/K rows",
        ));
    }
    let values = support
        .pairs
        .iter()
        .map(|&(i, j)| {
            let (i, j) = (i as usize, j as usize);
            let logit = dot(q.row(i), k.row(j));
            let e = logit.exp();
            if !e.is_finite() {
                return Err(Error::ExpOverflow {
                    row: i,
                    col: j,
                    exponent: logit.as_f64(),
                });
            }
            Ok(e - factors.entry(i, j))
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(SparseCorrection { support, values })
}

/// `S·V` and `S·1` by accumulation over the stored entries.
pub fn sparse_apply<T: Real>(
    corr: &SparseCorrection<T>,
    v: &DenseMatrix<T>,
) -> Result<(DenseMatrix<T>, Vec<T>)> {
    if v.rows() != corr.support.n_k {
        return Err(Error::mismatch(
            "sparse_apply",
            format!(
                "S has {} columns, V has {} rows",
                corr.support.n_k,
                v.rows()
            ),
        ));
    }
    let mut out = DenseMatrix::zeros(corr.support.n_q, v.cols());
    let mut norm = vec![T::zero(); corr.support.n_q];
    for (i, j, s) in corr.iter() {
        norm[i] += s;
        for (o, &x) in out.row_mut(i).iter_mut().zip(v.row(j)) {
            *o += s * x;
        }
    }
    Ok((out, norm))
}

/// Draws one hash family and reports whether `q` and `k` collide in any of
/// `rounds` rounds.
///
/// Only the images `R q` and `R k` of the Haar rotation matter. For an
/// orthonormal basis `b₁ = q/‖q‖`, `b₂ ⟂ b₁` spanning `{q, k}`, the pair
/// `(R b₁, R b₂)` is distributed as Gram-Schmidt applied to two independent
/// Gaussian vectors, so a round costs `O(d)` instead of a `d×d` QR.
pub fn sampled_collision<T: Real>(q: &[T], k: &[T], rounds: usize, rng: &mut Rng) -> bool {
    let d = q.len();
    let to64 = |x: &[T]| x.iter().map(|v| v.as_f64()).collect::<Vec<f64>>();
    let (q, k) = (to64(q), to64(k));
    let (nq, nk) = (dot(&q, &q).sqrt(), dot(&k, &k).sqrt());
    let cos = if nq > 0.0 && nk > 0.0 {
        (dot(&q, &k) / (nq * nk)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    let mut u = vec![0.0f64; d];
    let mut w = vec![0.0f64; d];
    let mut collided = false;
    for _ in 0..rounds {
        rng::fill_normal(rng, &mut u);
        rng::fill_normal(rng, &mut w);
        let nu = dot(&u, &u).sqrt();
        u.iter_mut().for_each(|x| *x /= nu);
        let p = dot(&u, &w);
        w.iter_mut().zip(&u).for_each(|(x, &ux)| *x -= p * ux);
        let nw = dot(&w, &w).sqrt();
        w.iter_mut().for_each(|x| *x /= nw);
        let hq = if nq > 0.0 {
            signed_argmax(u.iter().copied())
        } else {
            0
        };
        let hk = if nk > 0.0 {
            signed_argmax(u.iter().zip(&w).map(|(&a, &b)| cos * a + sin * b))
        } else {
            0
        };
        collided |= hq == hk;
    }
    collided
}
