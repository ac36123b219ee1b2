//! Seeding helpers.
//!
//! All randomness flows through ChaCha8 streams so that a `(seed, stream)`
//! pair reproduces the same numbers on every platform and thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::matrix::DenseMatrix;
use crate::scalar::Real;

pub type Rng = ChaCha8Rng;

/// Generator for stream `stream` of `seed`. Distinct streams are independent.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer, used to derive child seeds.
pub fn derive(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Fills `out` with standard normals drawn in f64 and rounded to `T`, so the
/// f32 and f64 paths see the same underlying draws.
pub fn fill_normal<T: Real>(rng: &mut Rng, out: &mut [T]) {
    for x in out {
        *x = T::of(normal(rng));
    }
}

pub fn gaussian_matrix<T: Real>(rows: usize, cols: usize, rng: &mut Rng) -> DenseMatrix<T> {
    let mut data = vec![T::zero(); rows * cols];
    fill_normal(rng, &mut data);
    DenseMatrix::from_vec_unchecked(rows, cols, data)
}
