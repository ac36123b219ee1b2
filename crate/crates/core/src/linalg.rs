//! Dense factorizations shared by the hash family, the SVD oracle and robust PCA.

use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix};
use crate::scalar::Real;

/// Orthonormal factor of a thin QR decomposition.
///
/// Modified Gram-Schmidt with one re-orthogonalization pass. Columns are
/// normalized so the implied `R` has a nonnegative diagonal, which makes the
/// factor of a Gaussian matrix Haar-distributed. A column that is (numerically)
/// in the span of its predecessors comes out as zero.
pub fn orthonormal_columns<T: Real>(a: &DenseMatrix<T>) -> DenseMatrix<T> {
    let (rows, cols) = a.shape();
    let at = a.transpose();
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(cols);
    for j in 0..cols {
        let mut v = at.row(j).to_vec();
        let original = dot(&v, &v).sqrt();
        for _ in 0..2 {
            for b in &basis {
                let p = dot(b, &v);
                for (x, &bx) in v.iter_mut().zip(b) {
                    *x -= p * bx;
                }
            }
        }
        let n = dot(&v, &v).sqrt();
        let floor = T::epsilon() * T::of_usize(rows.max(1)) * original;
        if n > floor && n > T::min_positive_value() {
            v.iter_mut().for_each(|x| *x /= n);
        } else {
            v.iter_mut().for_each(|x| *x = T::zero());
        }
        basis.push(v);
    }
    DenseMatrix::from_fn(rows, cols, |i, j| basis[j][i])
}

/// Thin singular value decomposition `A = U diag(σ) Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: DenseMatrix<T>,
    pub sigma: Vec<T>,
    pub vt: DenseMatrix<T>,
    /// Jacobi sweeps (or power iterations) spent.
    pub sweeps: usize,
}

impl<T: Real> Svd<T> {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Keeps the leading `r` triplets.
    pub fn truncate(mut self, r: usize) -> Self {
        let r = r.min(self.sigma.len());
        self.sigma.truncate(r);
        let u = &self.u;
        self.u = DenseMatrix::from_fn(u.rows(), r, |i, j| u[(i, j)]);
        let vt = &self.vt;
        self.vt = DenseMatrix::from_fn(r, vt.cols(), |i, j| vt[(i, j)]);
        self
    }

    /// `U diag(σ) Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix<T> {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (x, &s) in us.row_mut(i).iter_mut().zip(&self.sigma) {
                *x *= s;
            }
        }
        us.matmul(&self.vt).expect("svd factors are conformable")
    }
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Rotates column pairs of `A` until every pair is orthogonal to within
/// `tol · ‖a_p‖‖a_q‖`. Deterministic: the sweep order is fixed. Singular
/// values come back sorted nonincreasing; left vectors of zero singular values
/// are completed to an orthonormal set.
pub fn jacobi_svd<T: Real>(a: &DenseMatrix<T>) -> Result<Svd<T>> {
    if a.rows() < a.cols() {
        let t = jacobi_svd(&a.transpose())?;
        return Ok(Svd {
            u: t.vt.transpose(),
            sigma: t.sigma,
            vt: t.u.transpose(),
            sweeps: t.sweeps,
        });
    }
    let (rows, cols) = a.shape();
    let tol = T::epsilon() * T::of_usize(rows.max(1));
    const MAX_SWEEPS: usize = 80;

    // column-major working copies
    let mut w: Vec<Vec<T>> = (0..cols).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<T>> = (0..cols)
        .map(|j| {
            (0..cols)
                .map(|i| if i == j { T::one() } else { T::zero() })
                .collect()
        })
        .collect();

    let mut sweeps = 0;
    let mut converged = cols < 2;
    let mut worst = T::zero();
    while !converged && sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        worst = T::zero();
        for p in 0..cols - 1 {
            for q in p + 1..cols {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                let scale = (alpha * beta).sqrt();
                if scale == T::zero() || gamma.abs() <= tol * scale {
                    continue;
                }
                worst = worst.max(gamma.abs() / scale);
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "jacobi svd",
            iterations: sweeps,
            residual: worst.as_f64(),
        });
    }

    let mut order: Vec<(T, usize)> = w
        .iter()
        .enumerate()
        .map(|(j, c)| (dot(c, c).sqrt(), j))
        .collect();
    order.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));

    let sigma_max = order.first().map_or(T::zero(), |o| o.0);
    let cutoff = sigma_max * T::epsilon() * T::of_usize(rows.max(1));
    let mut u_cols: Vec<Vec<T>> = Vec::with_capacity(cols);
    let mut sigma = Vec::with_capacity(cols);
    for &(s, j) in &order {
        if s > cutoff && s > T::zero() {
            u_cols.push(w[j].iter().map(|&x| x / s).collect());
            sigma.push(s);
        } else {
            u_cols.push(complete_basis(&u_cols, rows));
            sigma.push(T::zero());
        }
    }
    let u = DenseMatrix::from_fn(rows, cols, |i, j| u_cols[j][i]);
    let vt = DenseMatrix::from_fn(cols, cols, |i, j| v[order[i].1][j]);
    Ok(Svd {
        u,
        sigma,
        vt,
        sweeps,
    })
}

fn rotate<T: Real>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// A unit vector orthogonal to every vector in `basis`.
fn complete_basis<T: Real>(basis: &[Vec<T>], dim: usize) -> Vec<T> {
    for e in 0..dim {
        let mut v = vec![T::zero(); dim];
        v[e] = T::one();
        for _ in 0..2 {
            for b in basis {
                let p = dot(b, &v);
                for (x, &bx) in v.iter_mut().zip(b) {
                    *x -= p * bx;
                }
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > T::of(0.5) {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
    vec![T::zero(); dim]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn max_orthogonality_defect(q: &DenseMatrix<f64>) -> f64 {
        let g = q.t_matmul(q).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }

    #[test]
    fn gaussian_qr_is_orthonormal() {
        let mut r = rng::stream(3, 0);
        let a: DenseMatrix<f64> = rng::gaussian_matrix(20, 20, &mut r);
        let q = orthonormal_columns(&a);
        assert!(max_orthogonality_defect(&q) < 1e-12);
    }

    #[test]
    fn jacobi_reconstructs_rectangular() {
        let mut r = rng::stream(5, 0);
        for (m, n) in [(7, 4), (4, 7), (6, 6)] {
            let a: DenseMatrix<f64> = rng::gaussian_matrix(m, n, &mut r);
            let svd = jacobi_svd(&a).unwrap();
            let err = svd.reconstruct().sub(&a).unwrap().frobenius_norm();
            assert!(err < 1e-12, "{m}x{n}: {err}");
            assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
            assert!(max_orthogonality_defect(&svd.u) < 1e-10);
            assert!(max_orthogonality_defect(&svd.vt.transpose()) < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_left_vectors_are_completed() {
        let a = DenseMatrix::<f64>::from_rows(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]).unwrap();
        let svd = jacobi_svd(&a).unwrap();
        assert_eq!(svd.sigma[1], 0.0);
        assert!(max_orthogonality_defect(&svd.u) < 1e-10);
    }
}
