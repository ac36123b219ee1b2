use crate::approx::guard;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::scalar::Real;

/// Degree-`D` Taylor polynomial of `exp` applied entrywise to `β·QQᵀ`.
#[derive(Debug, Clone)]
pub struct TaylorApprox<T> {
    pub matrix: DenseMatrix<T>,
    pub degree: usize,
    /// Upper bound on the rank, `Σ_{i≤D} C(d+i−1, i)`, saturating at `u64::MAX`.
    pub rank_bound: u64,
}

/// `f_D(β·QQᵀ)` with `f_D(x) = Σ_{i≤D} xⁱ/i!`, materialized.
///
/// `QQᵀ` has rank at most `d`, and its `i`-th Hadamard power lies in the
/// span of degree-`i` monomials of the rows of `Q`, hence the rank bound.
pub fn taylor_lowrank<T: Real>(
    q: &DenseMatrix<T>,
    beta: T,
    degree: usize,
) -> Result<TaylorApprox<T>> {
    guard(q.rows(), q.rows())?;
    let gram = q.matmul_t(q)?;
    let matrix = gram.map(|a| taylor_exp(beta * a, degree));
    if let Err(e) = matrix.ensure_finite() {
        return Err(Error::InvalidParameter(format!(
            "Taylor polynomial overflowed: {e}"
        )));
    }
    Ok(TaylorApprox {
        matrix,
        degree,
        rank_bound: taylor_rank_bound(q.cols(), degree),
    })
}

/// Horner evaluation of `Σ_{i≤D} xⁱ/i!`.
fn taylor_exp<T: Real>(x: T, degree: usize) -> T {
    let mut acc = T::one();
    for i in (1..=degree).rev() {
        acc = T::one() + acc * x / T::of_usize(i);
    }
    acc
}

/// `Σ_{i≤D} C(d+i−1, i)`, the number of monomials of degree at most `D` in
/// `d` variables.
pub fn taylor_rank_bound(d: usize, degree: usize) -> u64 {
    let mut total: u64 = 0;
    let mut term: u128 = 1; // C(d−1, 0)
    for i in 0..=degree {
        if i > 0 {
            term = term * (d + i - 1) as u128 / i as u128;
        }
        total = total.saturating_add(term.min(u64::MAX as u128) as u64);
        if term > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    total
}

/// Smallest degree meeting `D ≥ 10(L + ln(1/ε))`, where `L` bounds `|β·A_ij|`.
pub fn taylor_degree_for(eps: f64, magnitude: f64) -> usize {
    (10.0 * (magnitude + (1.0 / eps).ln())).ceil().max(0.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_zero_is_all_ones() {
        let q = DenseMatrix::<f64>::from_rows(&[&[1.0, 2.0], &[-1.0, 0.5], &[0.0, 3.0]]).unwrap();
        let t = taylor_lowrank(&q, 1.0, 0).unwrap();
        assert!(t.matrix.as_slice().iter().all(|&x| x == 1.0));
        assert_eq!(t.rank_bound, 1);
    }

    #[test]
    fn degree_one_is_ones_plus_gram() {
        let q = DenseMatrix::<f64>::from_rows(&[&[1.0, 2.0], &[-1.0, 0.5]]).unwrap();
        let t = taylor_lowrank(&q, 1.0, 1).unwrap();
        let gram = q.matmul_t(&q).unwrap();
        assert_eq!(t.matrix, gram.map(|a| 1.0 + a));
        assert_eq!(t.rank_bound, 3);
    }

    #[test]
    fn scalar_hand_taylor() {
        let q = DenseMatrix::<f64>::from_rows(&[&[0.5f64.sqrt()]]).unwrap();
        let t = taylor_lowrank(&q, 1.0, 3).unwrap();
        let want = 1.0 + 0.5 + 0.125 + 0.125 / 6.0;
        assert!((t.matrix[(0, 0)] - want).abs() < 1e-15);
        assert!((t.matrix[(0, 0)] - 0.5f64.exp()).abs() < 3e-3);
    }

    #[test]
    fn rank_bound_counts_monomials() {
        // d = 2: 1 + 2 + 3 + 4
        assert_eq!(taylor_rank_bound(2, 3), 10);
        assert_eq!(taylor_rank_bound(1, 5), 6);
        assert_eq!(taylor_rank_bound(1000, 40), u64::MAX);
    }

    #[test]
    fn degree_rule() {
        assert_eq!(taylor_degree_for(1e-3, 0.0), 70);
        assert_eq!(taylor_degree_for(1.0, 2.0), 20);
    }
}
