//! Reference decompositions: the best `k`-sparse and best rank-`r`
//! approximations, the Taylor low-rank construction, robust PCA, and the
//! uncorrected sparse + low-rank sum.

mod baseline;
mod rpca;
mod svd;
mod taylor;
mod topk;

pub use baseline::{budgeted_sl_decomposition, naive_add_baseline, BudgetedDecomposition};
pub use rpca::{robust_pca, RpcaParams, RpcaResult};
pub use svd::{lowrank_error, truncated_svd, truncated_svd_with, SvdEngine};
pub use taylor::{taylor_degree_for, taylor_lowrank, taylor_rank_bound, TaylorApprox};
pub use topk::{topk_error, topk_sparse};

use crate::matrix::DenseMatrix;
use crate::scalar::Real;

/// Coordinate-format sparse matrix with entries sorted by `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CooMatrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, T)>,
}

impl<T: Real> CooMatrix<T> {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }

    /// Largest number of stored entries in any row.
    pub fn max_row_nnz(&self) -> usize {
        let mut counts = vec![0usize; self.rows];
        for &(i, _, _) in &self.entries {
            counts[i] += 1;
        }
        counts.into_iter().max().unwrap_or(0)
    }
}
