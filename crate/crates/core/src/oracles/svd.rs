use crate::error::{Error, Result};
use crate::linalg::{jacobi_svd, orthonormal_columns, Svd};
use crate::matrix::DenseMatrix;
use crate::rng;
use crate::scalar::Real;

/// Which SVD routine backs [`truncated_svd_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdEngine {
    /// Jacobi when the smaller dimension is at most 256 or `r` is close to
    /// it, randomized subspace iteration otherwise.
    Auto,
    Jacobi,
    Randomized {
        power_iters: usize,
        oversample: usize,
        seed: u64,
    },
}

const JACOBI_MAX_DIM: usize = 256;
const DEFAULT_RANDOMIZED: SvdEngine = SvdEngine::Randomized {
    power_iters: 2,
    oversample: 8,
    seed: 0x5eed,
};

/// Leading `r` singular triplets of `M` with the automatic engine choice.
pub fn truncated_svd<T: Real>(m: &DenseMatrix<T>, r: usize) -> Result<Svd<T>> {
    truncated_svd_with(m, r, SvdEngine::Auto)
}

pub fn truncated_svd_with<T: Real>(
    m: &DenseMatrix<T>,
    r: usize,
    engine: SvdEngine,
) -> Result<Svd<T>> {
    let small = m.rows().min(m.cols());
    if r > small {
        return Err(Error::InvalidParameter(format!(
            "rank {r} exceeds min dimension {small}"
        )));
    }
    let engine = match engine {
        SvdEngine::Auto if small <= JACOBI_MAX_DIM || r + 8 >= small => SvdEngine::Jacobi,
        SvdEngine::Auto => DEFAULT_RANDOMIZED,
        e => e,
    };
    match engine {
        SvdEngine::Randomized {
            power_iters,
            oversample,
            seed,
        } if r + oversample < small => randomized(m, r, power_iters, oversample, seed),
        _ => Ok(jacobi_svd(m)?.truncate(r)),
    }
}

/// Randomized range finder with subspace (power) iteration, then an exact
/// SVD of the small projected matrix.
fn randomized<T: Real>(
    m: &DenseMatrix<T>,
    r: usize,
    power_iters: usize,
    oversample: usize,
    seed: u64,
) -> Result<Svd<T>> {
    let width = r + oversample;
    let mut g = rng::stream(seed, 0);
    let omega: DenseMatrix<T> = rng::gaussian_matrix(m.cols(), width, &mut g);
    let mut basis = orthonormal_columns(&m.matmul(&omega)?);
    for _ in 0..power_iters {
        let back = orthonormal_columns(&m.t_matmul(&basis)?);
        basis = orthonormal_columns(&m.matmul(&back)?);
    }
    let projected = basis.t_matmul(m)?;
    let small = jacobi_svd(&projected)?;
    Ok(Svd {
        u: basis.matmul(&small.u)?,
        sigma: small.sigma,
        vt: small.vt,
        sweeps: small.sweeps + power_iters,
    }
    .truncate(r))
}

/// `‖M − M_r‖_F` for the rank-`r` truncation.
pub fn lowrank_error<T: Real>(m: &DenseMatrix<T>, r: usize) -> Result<T> {
    let svd = truncated_svd(m, r)?;
    Ok(m.sub(&svd.reconstruct())?.frobenius_norm())
}
