//! Seeded fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tekfac::approx::DampingMode;
use tekfac::{LayerGradientBatch, Matrix, Method, MethodState};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Random symmetric positive definite matrix of size `n`.
pub fn spd<R: Rng>(n: usize, rng: &mut R) -> Matrix {
    let g = gaussian(n, n, rng);
    &g * g.transpose() / n as f64 + Matrix::identity(n, n)
}

/// Gaussian activations and output gradients for one layer.
pub fn layer_batch(batch: usize, in_dim: usize, out_dim: usize, seed: u64) -> LayerGradientBatch {
    let mut r = rng(seed);
    LayerGradientBatch::new(
        gaussian(batch, in_dim, &mut r),
        gaussian(batch, out_dim, &mut r),
    )
    .expect("conforming batch")
}

/// A state with factors, eigenbasis and re-scaling all populated.
pub fn ready_state(method: Method, batch: &LayerGradientBatch) -> MethodState {
    let damping = DampingMode::AutoTrace { vartheta: 0.01 };
    let mut state = MethodState::new(method);
    state.refresh_factors(batch, 0.95).expect("factors");
    state.refresh_eigenbasis(damping).expect("eigenbasis");
    state
        .refresh_rescaling(batch, 0.95, damping)
        .expect("re-scaling");
    state
}
