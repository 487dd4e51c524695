mod common;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tekfac::approx::{
    compute_eigenbasis, rescaling_from_batch, BlockApproximation, DampingMode, Method, MethodState,
};
use tekfac::fim::{approximation_error, exact_block_fim, kfac_factors, tkfac_factors};
use tekfac::linalg::{relative_frobenius_error, sym_eig, vec};
use tekfac::{KroneckerFactors, LayerGradientBatch, Matrix};

fn trials(count: u64) -> impl Iterator<Item = Vec<LayerGradientBatch>> {
    (0..count).map(|t| {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + t);
        common::random_layer_batches(&[8, 6, 4], 64, &mut rng)
    })
}

#[test]
fn tkfac_and_tekfac_preserve_the_trace() {
    for batches in trials(20) {
        for batch in &batches {
            let f = exact_block_fim(batch).unwrap();
            let KroneckerFactors::Tkfac { sigma, phi, psi } = tkfac_factors(batch).unwrap() else {
                unreachable!()
            };
            assert!((phi.trace() - 1.0).abs() < 1e-10);
            assert!((psi.trace() - 1.0).abs() < 1e-10);
            assert!(common::rel(sigma * phi.trace() * psi.trace(), f.trace()) <= 1e-10);

            // Direct summation oracle for the same trace.
            let direct: f64 = (0..batch.batch_size())
                .map(|i| batch.sample_gradient(i).norm_squared())
                .sum::<f64>()
                / batch.batch_size() as f64;
            assert!(common::rel(f.trace(), direct) <= 1e-12);

            let tek = BlockApproximation::from_batch(Method::Tekfac, batch).unwrap();
            assert!(common::rel(tek.trace(), f.trace()) <= 1e-10);
            assert!(common::rel(tek.dense().unwrap().trace(), f.trace()) <= 1e-10);
        }
    }
}

#[test]
fn single_sample_reconstructions_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for batches in (0..5).map(|_| common::random_layer_batches(&[8, 6, 4], 1, &mut rng)) {
        for batch in &batches {
            let f = exact_block_fim(batch).unwrap();
            assert!(relative_frobenius_error(&kfac_factors(batch).dense(), f.matrix()) <= 1e-12);
            assert!(
                relative_frobenius_error(&tkfac_factors(batch).unwrap().dense(), f.matrix())
                    <= 1e-12
            );
            let tek = BlockApproximation::from_batch(Method::Tekfac, batch).unwrap();
            assert!(relative_frobenius_error(&tek.dense().unwrap(), f.matrix()) <= 1e-12);
        }
    }
}

#[test]
fn factors_are_psd() {
    for batches in trials(10) {
        for batch in &batches {
            for factors in [kfac_factors(batch), tkfac_factors(batch).unwrap()] {
                for m in [factors.input_factor(), factors.output_factor()] {
                    let e = sym_eig(m).unwrap();
                    let largest = e.values[0];
                    let smallest = e.values[e.values.len() - 1];
                    assert!(smallest >= -1e-10 * largest);
                }
            }
        }
    }
}

#[test]
fn corrected_rescaling_never_loses_to_naive() {
    for batches in trials(30) {
        for batch in &batches {
            let f = exact_block_fim(batch).unwrap();
            let err = |m: Method| {
                let approx = BlockApproximation::from_batch(m, batch).unwrap();
                approximation_error(&f, &approx.dense().unwrap()).unwrap()
            };
            assert!(err(Method::Tekfac) <= err(Method::Tkfac) + 1e-10);
            assert!(err(Method::Ekfac) <= err(Method::Kfac) + 1e-10);
        }
    }
}

#[test]
fn naive_tkfac_eigen_form_equals_factor_form() {
    for batches in trials(3) {
        for batch in &batches {
            let tk = BlockApproximation::from_batch(Method::Tkfac, batch).unwrap();
            let dense = tkfac_factors(batch).unwrap().dense();
            assert!(relative_frobenius_error(&tk.dense().unwrap(), &dense) <= 1e-10);
        }
    }
}

#[test]
fn theta_is_the_optimal_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let batches = common::random_layer_batches(&[8, 6, 4], 64, &mut rng);
    let batch = &batches[1];
    let f = exact_block_fim(batch).unwrap();
    let tek = BlockApproximation::from_batch(Method::Tekfac, batch).unwrap();
    let q = tek.basis.in_basis().kronecker(tek.basis.out_basis());
    let err =
        |d: &DVector<f64>| (f.matrix() - &q * Matrix::from_diagonal(d) * q.transpose()).norm();
    let best = err(&tek.diag);
    let scale = tek.diag.amax();
    for _ in 0..1000 {
        let delta = DVector::from_fn(tek.diag.len(), |_, _| {
            rng.random_range(-1.0..1.0) * scale * 0.1
        });
        if delta.iter().all(|&d| d == 0.0) {
            continue;
        }
        assert!(err(&(&tek.diag + delta)) - best >= -1e-12);
    }
}

#[test]
fn rescaling_correction_changes_the_diagonal() {
    for batches in trials(5) {
        for batch in &batches {
            let naive = BlockApproximation::from_batch(Method::Tkfac, batch).unwrap();
            let corrected = BlockApproximation::from_batch(Method::Tekfac, batch).unwrap();
            let gap = (&naive.diag - &corrected.diag).amax();
            assert!(gap > 0.0);
        }
    }
}

#[test]
fn preconditioned_direction_is_a_descent_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for batches in trials(5) {
        for batch in &batches {
            for method in Method::ALL {
                let damping = DampingMode::AutoTrace { vartheta: 0.01 };
                let mut state = MethodState::new(method);
                state.refresh_factors(batch, 0.95).unwrap();
                state.refresh_eigenbasis(damping).unwrap();
                state.refresh_rescaling(batch, 0.95, damping).unwrap();
                for _ in 0..5 {
                    let g = common::gaussian(batch.out_dim(), batch.in_dim(), &mut rng);
                    let p = state.precondition(&g).unwrap();
                    assert!(vec(&g).dot(&vec(&p)) > 0.0, "{method}");
                }
            }
        }
    }
}

fn gaussian_batch(n: usize, in_dim: usize, out_dim: usize, seed: u64) -> LayerGradientBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LayerGradientBatch::new(
        common::gaussian(n, in_dim, &mut rng),
        common::gaussian(n, out_dim, &mut rng),
    )
    .unwrap()
}

#[test]
fn tekfac_precondition_matches_dense_solve() {
    // 3x2 weight layer: out = 3, in = 2.
    let batch = gaussian_batch(40, 2, 3, 5);
    let damping = DampingMode::Fixed { lambda: 0.05 };
    let mut state = MethodState::new(Method::Tekfac);
    state.refresh_factors(&batch, 0.95).unwrap();
    state.refresh_eigenbasis(damping).unwrap();
    state.refresh_rescaling(&batch, 0.95, damping).unwrap();

    let basis = state.basis().unwrap();
    let r = state.rescaling().unwrap();
    let divisors: Vec<f64> = r.theta.iter().map(|t| t + r.lambda).collect();
    let dense = common::dense_from_basis(basis.in_basis(), basis.out_basis(), &divisors);

    let g = batch.mean_gradient();
    let expected = dense.lu().solve(&vec(&g)).unwrap();
    let got = vec(&state.precondition(&g).unwrap());
    assert!((&got - &expected).norm() <= 1e-8 * expected.norm());
}

#[test]
fn kfac_precondition_matches_dense_inverse() {
    let batch = gaussian_batch(200, 3, 2, 6);
    let KroneckerFactors::Kfac { a, u } = kfac_factors(&batch) else {
        unreachable!()
    };
    let damping = DampingMode::Fixed { lambda: 0.0 };
    let mut state = MethodState::new(Method::Kfac);
    state.refresh_factors(&batch, 1.0).unwrap();
    state.refresh_eigenbasis(damping).unwrap();
    state.refresh_rescaling(&batch, 1.0, damping).unwrap();

    let g = batch.mean_gradient();
    let expected = a.kronecker(&u).lu().solve(&vec(&g)).unwrap();
    let got = vec(&state.precondition(&g).unwrap());
    assert!((&got - &expected).norm() <= 1e-6 * expected.norm());

    // Factored closed form U⁻¹ G A⁻¹.
    let closed = u.clone().try_inverse().unwrap() * &g * a.clone().try_inverse().unwrap();
    assert!((vec(&closed) - &expected).norm() <= 1e-6 * expected.norm());
}

#[test]
fn standard_normal_activations_give_identity_covariance() {
    let batch = gaussian_batch(20_000, 3, 2, 9);
    let KroneckerFactors::Kfac { a, .. } = kfac_factors(&batch) else {
        unreachable!()
    };
    // Entry-wise standard error is ~1/sqrt(N) (sqrt(2/N) on the diagonal).
    let tol = 5.0 * (2.0f64 / 20_000.0).sqrt();
    assert!((a - Matrix::identity(3, 3)).amax() < tol);
}

#[test]
fn identity_basis_theta_is_fim_diagonal() {
    for batches in trials(2) {
        for batch in &batches {
            let f = exact_block_fim(batch).unwrap();
            let basis = tekfac::Eigenbasis::identity(batch.in_dim(), batch.out_dim());
            let theta = rescaling_from_batch(&basis, batch).unwrap();
            assert!((theta - f.matrix().diagonal()).amax() <= 1e-14 * f.matrix().amax());
        }
    }
}

#[test]
fn eigenbasis_of_tkfac_factors_sums_to_one() {
    for batches in trials(3) {
        for batch in &batches {
            let basis = compute_eigenbasis(&tkfac_factors(batch).unwrap()).unwrap();
            assert!((basis.in_values().sum() - 1.0).abs() < 1e-8);
            assert!((basis.out_values().sum() - 1.0).abs() < 1e-8);
            assert!(basis.in_values().iter().all(|&v| v >= 0.0));
            let q = basis.in_basis();
            assert!((q.tr_mul(q) - Matrix::identity(q.nrows(), q.nrows())).amax() < 1e-10);
        }
    }
}
