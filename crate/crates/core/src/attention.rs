//! Exact softmax attention, the reference every approximation is scored against.
//!
//! Logits are `QKᵀ` with no `1/√d` factor; callers fold any scaling into `Q`
//! or `K`. The unnormalized matrix is computed without max-shifting, so
//! `|qᵀk|` must stay below the exponent range of the scalar type.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix};
use crate::scalar::Real;

/// Query, key and value matrices for one attention head.
#[derive(Debug, Clone)]
pub struct AttentionBatch<T> {
    q: DenseMatrix<T>,
    k: DenseMatrix<T>,
    v: DenseMatrix<T>,
    causal: bool,
}

impl<T: Real> AttentionBatch<T> {
    pub fn new(
        q: DenseMatrix<T>,
        k: DenseMatrix<T>,
        v: DenseMatrix<T>,
        causal: bool,
    ) -> Result<Self> {
        if q.cols() != k.cols() {
            return Err(Error::mismatch(
                "AttentionBatch",
                format!("Q has {} columns, K has {}", q.cols(), k.cols()),
            ));
        }
        if k.rows() != v.rows() {
            return Err(Error::mismatch(
                "AttentionBatch",
                format!("K has {} rows, V has {}", k.rows(), v.rows()),
            ));
        }
        if causal && q.rows() != k.rows() {
            return Err(Error::mismatch(
                "AttentionBatch",
                format!(
                    "causal attention needs n_q == n_k, got {} and {}",
                    q.rows(),
                    k.rows()
                ),
            ));
        }
        Ok(Self { q, k, v, causal })
    }

    pub fn q(&self) -> &DenseMatrix<T> {
        &self.q
    }

    pub fn k(&self) -> &DenseMatrix<T> {
        &self.k
    }

    pub fn v(&self) -> &DenseMatrix<T> {
        &self.v
    }

    pub fn causal(&self) -> bool {
        self.causal
    }

    pub fn n_q(&self) -> usize {
        self.q.rows()
    }

    pub fn n_k(&self) -> usize {
        self.k.rows()
    }

    pub fn head_dim(&self) -> usize {
        self.q.cols()
    }

    pub fn value_dim(&self) -> usize {
        self.v.cols()
    }

    pub fn with_causal(mut self, causal: bool) -> Result<Self> {
        if causal && self.n_q() != self.n_k() {
            return Err(Error::mismatch(
                "AttentionBatch",
                "causal attention needs n_q == n_k",
            ));
        }
        self.causal = causal;
        Ok(self)
    }

    /// Number of keys query `i` may attend to.
    pub(crate) fn visible_keys(&self, i: usize) -> usize {
        if self.causal {
            i + 1
        } else {
            self.n_k()
        }
    }
}

/// `exp(QKᵀ)`, with entries above the diagonal zeroed in causal mode.
pub fn unnormalized_attention<T: Real>(batch: &AttentionBatch<T>) -> Result<DenseMatrix<T>> {
    let n_k = batch.n_k();
    let mut out = DenseMatrix::zeros(batch.n_q(), n_k);
    out.as_mut_slice()
        .par_chunks_mut(n_k.max(1))
        .enumerate()
        .try_for_each(|(i, row)| {
            let q = batch.q.row(i);
            for (j, x) in row.iter_mut().enumerate().take(batch.visible_keys(i)) {
                let logit = dot(q, batch.k.row(j));
                let e = logit.exp();
                if !e.is_finite() {
                    return Err(Error::ExpOverflow {
                        row: i,
                        col: j,
                        exponent: logit.as_f64(),
                    });
                }
                *x = e;
            }
            Ok(())
        })?;
    Ok(out)
}

/// `softmax(QKᵀ)V` with per-row max-shift stabilization.
pub fn softmax_attention<T: Real>(batch: &AttentionBatch<T>) -> Result<DenseMatrix<T>> {
    let dv = batch.value_dim();
    let mut out = DenseMatrix::zeros(batch.n_q(), dv);
    if dv == 0 || batch.n_k() == 0 {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_chunks_mut(dv)
        .enumerate()
        .for_each(|(i, o)| {
            let q = batch.q.row(i);
            let visible = batch.visible_keys(i);
            let logits: Vec<T> = (0..visible).map(|j| dot(q, batch.k.row(j))).collect();
            let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
            let weights: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
            let total: T = weights.iter().copied().sum();
            for (j, &w) in weights.iter().enumerate() {
                let p = w / total;
                for (x, &v) in o.iter_mut().zip(batch.v.row(j)) {
                    *x += p * v;
                }
            }
        });
    Ok(out)
}

/// `softmax(QKᵀ)V` the textbook way: the full logit matrix is materialized,
/// softmaxed row by row, then multiplied by `V`. Quadratic in memory; this is
/// the baseline the benchmarks compare against.
pub fn materialized_attention<T: Real>(batch: &AttentionBatch<T>) -> Result<DenseMatrix<T>> {
    let mut p = batch.q.matmul_t(&batch.k)?;
    let n_k = batch.n_k();
    if n_k > 0 {
        p.as_mut_slice()
            .par_chunks_mut(n_k)
            .enumerate()
            .for_each(|(i, row)| {
                let visible = batch.visible_keys(i);
                softmax_in_place(&mut row[..visible]);
                row[visible..].iter_mut().for_each(|x| *x = T::zero());
            });
    }
    p.matmul(&batch.v)
}

/// Row-wise stabilized softmax of a logit matrix.
pub fn row_softmax<T: Real>(logits: &DenseMatrix<T>) -> DenseMatrix<T> {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    out
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}
