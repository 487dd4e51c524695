#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;
use tekfac::network::sample_model_labels;
use tekfac::{Activation, DenseNet, LayerGradientBatch, Matrix};

pub fn gaussian<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Per-layer true-Fisher statistics of a random tanh net on Gaussian inputs.
pub fn random_layer_batches<R: Rng>(
    widths: &[usize],
    batch: usize,
    rng: &mut R,
) -> Vec<LayerGradientBatch> {
    let net = DenseNet::random(widths, Activation::Tanh, rng).unwrap();
    let x = gaussian(batch, widths[0], rng);
    let pass = net.forward(&x).unwrap();
    let labels = sample_model_labels(&pass.logits, rng).unwrap();
    net.backward(&pass.cache, &labels).unwrap()
}

/// Dense `Q diag(d) Qᵀ` assembled with nalgebra's own Kronecker product.
pub fn dense_from_basis(q_in: &Matrix, q_out: &Matrix, diag: &[f64]) -> Matrix {
    let q = q_in.kronecker(q_out);
    let d = Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag));
    &q * d * q.transpose()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
