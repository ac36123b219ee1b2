use super::{topk_sparse, truncated_svd, CooMatrix};
use crate::approx::guard;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::linalg::Svd;
use crate::lsh::SupportSet;
use crate::matrix::{dot, DenseMatrix};
use crate::scalar::Real;

/// `Q̃K̃ᵀ + S'` with `S'_ij = exp(q_iᵀk_j)` on the support: the sparse and
/// low-rank estimates added without the subtraction, so supported entries
/// are counted twice.
pub fn naive_add_baseline<T: Real>(
    q: &DenseMatrix<T>,
    k: &DenseMatrix<T>,
    map: &FeatureMap<T>,
    support: &SupportSet,
) -> Result<DenseMatrix<T>> {
    guard(q.rows(), k.rows())?;
    if support.n_q() != q.rows() || support.n_k() != k.rows() {
        return Err(Error::mismatch(
            "naive_add_baseline",
            "support does not match Q/K",
        ));
    }
    let f = map.factors(q, k)?;
    let mut m = f.qt().matmul_t(f.kt())?;
    for &(i, j) in support.pairs() {
        let (i, j) = (i as usize, j as usize);
        m[(i, j)] += dot(q.row(i), k.row(j)).exp();
    }
    m.ensure_finite()?;
    Ok(m)
}

/// Sparse (≤ `k_s` per row) plus rank-`r` approximation of a matrix.
#[derive(Debug, Clone)]
pub struct BudgetedDecomposition<T> {
    pub sparse_part: CooMatrix<T>,
    pub lowrank_part: Svd<T>,
    /// `‖M − S − L‖_F`.
    pub error: T,
    /// Error after the initial low-rank fit and after every accepted alternation.
    pub trace: Vec<T>,
}

const MAX_ALTERNATIONS: usize = 25;

/// Alternating projections: fit `L` to `M − S` by truncated SVD, then `S`
/// to `M − L` by per-row top-k, for up to 25 rounds. A round that fails to
/// lower the error is discarded and ends the loop, so the trace never
/// increases.
pub fn budgeted_sl_decomposition<T: Real>(
    m: &DenseMatrix<T>,
    k_s: usize,
    r: usize,
) -> Result<BudgetedDecomposition<T>> {
    let mut lowrank = truncated_svd(m, r)?;
    let mut lr_dense = lowrank.reconstruct();
    let mut sparse = CooMatrix::empty(m.rows(), m.cols());
    let mut error = m.sub(&lr_dense)?.frobenius_norm();
    let mut trace = vec![error];
    for _ in 0..MAX_ALTERNATIONS {
        let s = topk_sparse(&m.sub(&lr_dense)?, k_s)?;
        let s_dense = s.to_dense();
        let l = truncated_svd(&m.sub(&s_dense)?, r)?;
        let l_dense = l.reconstruct();
        let e = m.sub(&s_dense)?.sub(&l_dense)?.frobenius_norm();
        if !(e < error) {
            break;
        }
        (sparse, lowrank, lr_dense, error) = (s, l, l_dense, e);
        trace.push(e);
    }
    Ok(BudgetedDecomposition {
        sparse_part: sparse,
        lowrank_part: lowrank,
        error,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::unnormalized_attention;
    use crate::features::make_feature_map;
    use crate::genmodel::gaussian_batch;
    use crate::oracles::{lowrank_error, topk_error};
    use crate::rng;

    #[test]
    fn naive_baseline_double_counts() {
        let b = gaussian_batch::<f64>(10, 10, 4, 1, 2, false).unwrap();
        let map = make_feature_map(4, 3, 1).unwrap();
        let f = map.factors(b.q(), b.k()).unwrap();
        let lr = f.qt().matmul_t(f.kt()).unwrap();
        let empty = naive_add_baseline(b.q(), b.k(), &map, &SupportSet::empty(10, 10)).unwrap();
        assert_eq!(empty, lr);
        let full =
            naive_add_baseline(b.q(), b.k(), &map, &SupportSet::full(10, 10, false)).unwrap();
        let want = unnormalized_attention(&b).unwrap().add(&lr).unwrap();
        assert!(full.sub(&want).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn degenerate_budgets_reduce_to_single_oracles() {
        let mut g = rng::stream(4, 0);
        let m: DenseMatrix<f64> = rng::gaussian_matrix(12, 12, &mut g);
        let only_lr = budgeted_sl_decomposition(&m, 0, 3).unwrap();
        assert!((only_lr.error - lowrank_error(&m, 3).unwrap()).abs() < 1e-10);
        assert_eq!(only_lr.sparse_part.nnz(), 0);
        let only_s = budgeted_sl_decomposition(&m, 4, 0).unwrap();
        assert!((only_s.error - topk_error(&m, 4).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn trace_is_nonincreasing_and_budgets_hold() {
        let mut g = rng::stream(5, 0);
        let m: DenseMatrix<f64> = rng::gaussian_matrix(20, 16, &mut g);
        let d = budgeted_sl_decomposition(&m, 3, 2).unwrap();
        assert!(d.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(d.sparse_part.max_row_nnz() <= 3);
        assert_eq!(d.lowrank_part.rank(), 2);
        let recon = d
            .sparse_part
            .to_dense()
            .add(&d.lowrank_part.reconstruct())
            .unwrap();
        assert!((m.sub(&recon).unwrap().frobenius_norm() - d.error).abs() < 1e-12);
    }
}
