//! Principal component pursuit by the inexact augmented Lagrange multiplier
//! method: alternate singular-value thresholding for `L` and soft
//! thresholding for `S`, then take a dual step on `Y`.

use serde::Serialize;

use crate::error::Result;
use crate::linalg::jacobi_svd;
use crate::matrix::DenseMatrix;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RpcaParams {
    /// Sparsity weight; `1/√max(rows, cols)` when `None`.
    pub lambda: Option<f64>,
    /// Stop once `‖M − L − S‖_F / ‖M‖_F` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial penalty; `1.25/‖M‖₂` when `None`.
    pub mu0: Option<f64>,
    /// Penalty growth factor per iteration.
    pub rho: f64,
}

impl Default for RpcaParams {
    fn default() -> Self {
        Self {
            lambda: None,
            tol: 1e-7,
            max_iter: 1000,
            mu0: None,
            rho: 1.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RpcaResult<T> {
    pub l: DenseMatrix<T>,
    pub s: DenseMatrix<T>,
    pub iterations: usize,
    /// Final `‖M − L − S‖_F / ‖M‖_F`.
    pub primal_residual: f64,
    pub lambda: f64,
    pub converged: bool,
    /// Relative residual after every iteration.
    pub trace: Vec<f64>,
    pub rank: usize,
    pub nnz: usize,
}

pub fn robust_pca<T: Real>(m: &DenseMatrix<T>, params: RpcaParams) -> Result<RpcaResult<T>> {
    m.ensure_finite()?;
    let (rows, cols) = m.shape();
    let lambda = params
        .lambda
        .unwrap_or_else(|| 1.0 / (rows.max(cols).max(1) as f64).sqrt());
    let norm_f = m.frobenius_norm().as_f64();
    if norm_f == 0.0 {
        return Ok(RpcaResult {
            l: DenseMatrix::zeros(rows, cols),
            s: DenseMatrix::zeros(rows, cols),
            iterations: 0,
            primal_residual: 0.0,
            lambda,
            converged: true,
            trace: Vec::new(),
            rank: 0,
            nnz: 0,
        });
    }
    let norm_2 = jacobi_svd(m)?.sigma[0].as_f64();
    let norm_inf = m.max_abs().as_f64();
    let mut y = m.scale(T::of(1.0 / norm_2.max(norm_inf / lambda)));
    let mut mu = params.mu0.unwrap_or(1.25 / norm_2);
    let mu_max = mu * 1e7;
    let mut s = DenseMatrix::zeros(rows, cols);
    let mut l = DenseMatrix::zeros(rows, cols);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut rank = 0;

    while trace.len() < params.max_iter {
        let inv_mu = T::of(1.0 / mu);
        let target = m.sub(&s)?.add(&y.scale(inv_mu))?;
        (l, rank) = singular_value_threshold(&target, inv_mu)?;
        let target = m.sub(&l)?.add(&y.scale(inv_mu))?;
        s = target.map(|x| soft_threshold(x, T::of(lambda) * inv_mu));
        let z = m.sub(&l)?.sub(&s)?;
        y = y.add(&z.scale(T::of(mu)))?;
        mu = (mu * params.rho).min(mu_max);
        let residual = z.frobenius_norm().as_f64() / norm_f;
        trace.push(residual);
        if residual < params.tol {
            converged = true;
            break;
        }
    }
    let nnz = s.as_slice().iter().filter(|x| **x != T::zero()).count();
    Ok(RpcaResult {
        l,
        s,
        iterations: trace.len(),
        primal_residual: trace.last().copied().unwrap_or(0.0),
        lambda,
        converged,
        trace,
        rank,
        nnz,
    })
}

fn soft_threshold<T: Real>(x: T, t: T) -> T {
    x.signum() * (x.abs() - t).max(T::zero())
}

/// `U shrink(Σ, t) Vᵀ` and the number of surviving singular values.
fn singular_value_threshold<T: Real>(x: &DenseMatrix<T>, t: T) -> Result<(DenseMatrix<T>, usize)> {
    let svd = jacobi_svd(x)?;
    let keep = svd.sigma.iter().take_while(|&&s| s > t).count();
    let mut shrunk = svd.truncate(keep);
    shrunk.sigma.iter_mut().for_each(|s| *s -= t);
    Ok((shrunk.reconstruct(), keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_matrix_returns_immediately() {
        let r = robust_pca(&DenseMatrix::<f64>::zeros(4, 3), RpcaParams::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
        assert_eq!(r.l.max_abs(), 0.0);
        assert_eq!(r.s.max_abs(), 0.0);
        assert!((r.lambda - 0.5).abs() < 1e-15);
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    #[test]
    fn separates_small_planted_problem() {
        let mut g = rng::stream(8, 0);
        let u: DenseMatrix<f64> = rng::gaussian_matrix(40, 1, &mut g);
        let v: DenseMatrix<f64> = rng::gaussian_matrix(40, 1, &mut g);
        let low = u.matmul_t(&v).unwrap();
        let mut m = low.clone();
        for t in 0..40 {
            m[(t, (7 * t + 3) % 40)] += 4.0;
        }
        let r = robust_pca(&m, RpcaParams::default()).unwrap();
        assert!(r.converged);
        let rel = r.l.sub(&low).unwrap().frobenius_norm() / low.frobenius_norm();
        assert!(rel < 1e-3, "{rel}");
        assert_eq!(r.rank, 1);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let mut g = rng::stream(1, 0);
        let m: DenseMatrix<f64> = rng::gaussian_matrix(10, 10, &mut g);
        let r = robust_pca(
            &m,
            RpcaParams {
                max_iter: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.iterations, 2);
        assert!(!r.converged);
    }
}
