use super::CooMatrix;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::scalar::Real;

/// Keeps the `k` largest-magnitude entries of every row; on equal
/// magnitude the smaller column index wins. This is the best `k`-per-row
/// sparse approximation in Frobenius norm.
pub fn topk_sparse<T: Real>(m: &DenseMatrix<T>, k: usize) -> Result<CooMatrix<T>> {
    if k > m.cols() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds the {} columns",
            m.cols()
        )));
    }
    let mut entries = Vec::with_capacity(m.rows() * k);
    let mut order: Vec<usize> = Vec::with_capacity(m.cols());
    for i in 0..m.rows() {
        let row = m.row(i);
        order.clear();
        order.extend(0..m.cols());
        // stable sort keeps ascending column order among equal magnitudes
        order.sort_by(|&a, &b| {
            row[b]
                .abs()
                .partial_cmp(&row[a].abs())
                .expect("finite entries")
        });
        let mut kept: Vec<usize> = order[..k].to_vec();
        kept.sort_unstable();
        entries.extend(kept.into_iter().map(|j| (i, j, row[j])));
    }
    Ok(CooMatrix {
        rows: m.rows(),
        cols: m.cols(),
        entries,
    })
}

/// `‖M − topk(M)‖_F`.
pub fn topk_error<T: Real>(m: &DenseMatrix<T>, k: usize) -> Result<T> {
    let s = topk_sparse(m, k)?;
    Ok(m.sub(&s.to_dense())?.frobenius_norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_largest_magnitudes() {
        let m = DenseMatrix::<f64>::from_rows(&[&[3.0, 1.0, 2.0]]).unwrap();
        assert_eq!(
            topk_sparse(&m, 2).unwrap().to_dense().as_slice(),
            &[3.0, 0.0, 2.0]
        );
        assert_eq!(topk_sparse(&m, 3).unwrap().to_dense(), m);
        let neg = DenseMatrix::<f64>::from_rows(&[&[1.0, -5.0, 2.0]]).unwrap();
        assert_eq!(
            topk_sparse(&neg, 1).unwrap().to_dense().as_slice(),
            &[0.0, -5.0, 0.0]
        );
        assert!(topk_sparse(&m, 4).is_err());
    }

    #[test]
    fn ties_go_to_the_smaller_column() {
        let m = DenseMatrix::<f64>::from_rows(&[&[1.0, -1.0, 1.0]]).unwrap();
        let s = topk_sparse(&m, 2).unwrap();
        assert_eq!(s.entries, vec![(0, 0, 1.0), (0, 1, -1.0)]);
    }

    #[test]
    fn zero_k_drops_everything() {
        let m = DenseMatrix::<f64>::from_rows(&[&[3.0, 4.0]]).unwrap();
        assert_eq!(topk_sparse(&m, 0).unwrap().nnz(), 0);
        assert_eq!(topk_error(&m, 0).unwrap(), 5.0);
    }
}
