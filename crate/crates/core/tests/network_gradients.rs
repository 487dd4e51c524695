mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tekfac::network::sample_model_labels;
use tekfac::{Activation, DenseNet, Matrix};

fn relative_error(numerical: f64, analytical: f64) -> f64 {
    let numerator = (numerical - analytical).abs();
    let denominator = (numerical.abs() + analytical.abs()).max(1e-8);
    numerator / denominator
}

fn central_difference_check(activation: Activation, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = DenseNet::random(&[5, 7, 6, 4], activation, &mut rng).unwrap();
    let x = common::gaussian(9, 5, &mut rng);
    let y: Vec<usize> = (0..9).map(|i| (i * 7 + seed as usize) % 4).collect();
    let grads = net.gradients(&x, &y).unwrap();

    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for (l, grad) in grads.iter().enumerate() {
        let (rows, cols) = net.weights()[l].shape();
        for i in 0..rows {
            for j in 0..cols {
                let orig = net.weights()[l][(i, j)];
                net.weights_mut()[l][(i, j)] = orig + eps;
                let plus = net.evaluate(&x, &y).unwrap().loss;
                net.weights_mut()[l][(i, j)] = orig - eps;
                let minus = net.evaluate(&x, &y).unwrap().loss;
                net.weights_mut()[l][(i, j)] = orig;
                let numerical = (plus - minus) / (2.0 * eps);
                worst = worst.max(relative_error(numerical, grad[(i, j)]));
            }
        }
    }
    worst
}

#[test]
fn backward_matches_central_differences_tanh() {
    for seed in 0..3 {
        let worst = central_difference_check(Activation::Tanh, seed);
        assert!(worst <= 1e-6, "seed {seed}: max relative error {worst:e}");
    }
}

#[test]
fn backward_matches_central_differences_relu() {
    let worst = central_difference_check(Activation::Relu, 11);
    assert!(worst <= 1e-6, "max relative error {worst:e}");
}

#[test]
fn small_gradient_step_decreases_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let mut net = DenseNet::random(&[4, 8, 3], Activation::Tanh, &mut rng).unwrap();
        let x = common::gaussian(16, 4, &mut rng);
        let y: Vec<usize> = (0..16).map(|i| i % 3).collect();
        let before = net.evaluate(&x, &y).unwrap().loss;
        let grads = net.gradients(&x, &y).unwrap();
        for (w, g) in net.weights_mut().iter_mut().zip(&grads) {
            *w -= g * 1e-3;
        }
        let after = net.evaluate(&x, &y).unwrap().loss;
        assert!(after < before, "{after} !< {before}");
    }
}

#[test]
fn per_sample_gradients_average_to_batch_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let net = DenseNet::random(&[6, 5, 4, 3], Activation::Tanh, &mut rng).unwrap();
    let x = common::gaussian(12, 6, &mut rng);
    let y: Vec<usize> = (0..12).map(|i| (i * 5) % 3).collect();
    let batch_grads = net.gradients(&x, &y).unwrap();

    // Independent route: one forward/backward per sample.
    let mut summed: Vec<Matrix> = net
        .weights()
        .iter()
        .map(|w| Matrix::zeros(w.nrows(), w.ncols()))
        .collect();
    for i in 0..12 {
        let xi = x.rows(i, 1).into_owned();
        for (acc, g) in summed
            .iter_mut()
            .zip(net.gradients(&xi, &y[i..=i]).unwrap())
        {
            *acc += g;
        }
    }
    for (s, b) in summed.iter().zip(&batch_grads) {
        let mean = s / 12.0;
        assert!((&mean - b).norm() <= 1e-12 * b.norm());
    }
}

#[test]
fn uniform_logits_sample_uniformly() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let classes = 4;
    let draws = 100_000;
    let logits = Matrix::zeros(draws, classes);
    let labels = sample_model_labels(&logits, &mut rng).unwrap();
    let mut counts = vec![0usize; classes];
    for y in labels {
        counts[y] += 1;
    }
    let p = 1.0 / classes as f64;
    let mean = draws as f64 * p;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!(
            (c as f64 - mean).abs() <= 3.0 * sd,
            "count {c} vs {mean} ± {}",
            3.0 * sd
        );
    }
}
