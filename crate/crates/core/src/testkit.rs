//! Seeded random frames and vectors for tests and benchmarks.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::frame::{build_frame, FrameOperator, DEFAULT_TIGHT_TOLERANCE};

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

pub fn gaussian_vector(len: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(len, |_, _| StandardNormal.sample(&mut rng))
}

/// Uniform draws on `[0, 1)`.
pub fn uniform_vector(len: usize, seed: u64) -> DVector<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(len, |_, _| rng.random::<f64>())
}

/// `n × n` orthogonal matrix from the QR factorization of a Gaussian matrix.
pub fn random_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    gaussian_matrix(n, n, seed).qr().q()
}

/// Tight `big_n × n` frame with `WᵀW = αI`.
pub fn random_tight_frame(big_n: usize, n: usize, alpha: f64, seed: u64) -> Result<FrameOperator> {
    let q = gaussian_matrix(big_n, n, seed).qr().q();
    build_frame(q * alpha.sqrt(), DEFAULT_TIGHT_TOLERANCE)
}

/// Generic (non-tight) Gaussian frame.
pub fn random_frame(big_n: usize, n: usize, seed: u64) -> Result<FrameOperator> {
    build_frame(gaussian_matrix(big_n, n, seed), DEFAULT_TIGHT_TOLERANCE)
}
