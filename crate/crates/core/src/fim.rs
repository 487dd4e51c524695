//! Exact per-layer Fisher blocks and their Kronecker-factored summaries.
//!
//! Expectations are plain means over the samples of one batch.

use crate::error::{dims, Error, Result};
use crate::linalg::{kron, Matrix};
use crate::network::LayerGradientBatch;

/// Largest block dimension (`in · out`, bias column included) the dense oracle
/// will materialize.
pub const EXACT_FIM_MAX_DIM: usize = 400;

/// `F_l = (1/N) Σ g_i g_iᵀ` with `g_i = vec(u_i a_iᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactBlockFim {
    matrix: Matrix,
}

impl ExactBlockFim {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// Per-sample gradients `vec(u_i a_iᵀ) = a_i ⊗ u_i`, one per row.
pub fn per_sample_gradients(batch: &LayerGradientBatch) -> Matrix {
    let (a, u) = (batch.a(), batch.u());
    let out = batch.out_dim();
    Matrix::from_fn(batch.batch_size(), batch.block_dim(), |i, k| {
        a[(i, k / out)] * u[(i, k % out)]
    })
}

pub fn exact_block_fim(batch: &LayerGradientBatch) -> Result<ExactBlockFim> {
    let dim = batch.block_dim();
    if dim > EXACT_FIM_MAX_DIM {
        return Err(Error::SizeGuard {
            dim,
            limit: EXACT_FIM_MAX_DIM,
        });
    }
    let g = per_sample_gradients(batch);
    let matrix = g.tr_mul(&g) / batch.batch_size() as f64;
    Ok(ExactBlockFim { matrix })
}

/// Kronecker factors of one layer block.
#[derive(Debug, Clone, PartialEq)]
pub enum KroneckerFactors {
    /// `F ≈ A ⊗ U`.
    Kfac { a: Matrix, u: Matrix },
    /// `F ≈ σ · Φ ⊗ Ψ` with `tr(Φ) = tr(Ψ) = 1`.
    Tkfac {
        sigma: f64,
        phi: Matrix,
        psi: Matrix,
    },
}

impl KroneckerFactors {
    /// `A` or `Φ`.
    pub fn input_factor(&self) -> &Matrix {
        match self {
            KroneckerFactors::Kfac { a, .. } => a,
            KroneckerFactors::Tkfac { phi, .. } => phi,
        }
    }

    /// `U` or `Ψ`.
    pub fn output_factor(&self) -> &Matrix {
        match self {
            KroneckerFactors::Kfac { u, .. } => u,
            KroneckerFactors::Tkfac { psi, .. } => psi,
        }
    }

    pub fn is_trace_restricted(&self) -> bool {
        matches!(self, KroneckerFactors::Tkfac { .. })
    }

    /// `σ` for the trace-restricted form, 1 otherwise.
    pub fn scale(&self) -> f64 {
        match self {
            KroneckerFactors::Kfac { .. } => 1.0,
            KroneckerFactors::Tkfac { sigma, .. } => *sigma,
        }
    }

    pub fn block_dim(&self) -> usize {
        self.input_factor().nrows() * self.output_factor().nrows()
    }

    /// Dense `A ⊗ U` or `σ Φ ⊗ Ψ`.
    pub fn dense(&self) -> Matrix {
        kron(self.input_factor(), self.output_factor()) * self.scale()
    }

    /// `weight · self + (1 − weight) · older`, element-wise on every factor.
    pub fn blend(&self, older: &KroneckerFactors, weight: f64) -> Result<KroneckerFactors> {
        let mix = |new: &Matrix, old: &Matrix| -> Result<Matrix> {
            if new.shape() != old.shape() {
                return Err(dims(format!(
                    "cannot blend factors of shape {:?} and {:?}",
                    new.shape(),
                    old.shape()
                )));
            }
            Ok(new * weight + old * (1.0 - weight))
        };
        match (self, older) {
            (KroneckerFactors::Kfac { a, u }, KroneckerFactors::Kfac { a: a0, u: u0 }) => {
                Ok(KroneckerFactors::Kfac {
                    a: mix(a, a0)?,
                    u: mix(u, u0)?,
                })
            }
            (
                KroneckerFactors::Tkfac { sigma, phi, psi },
                KroneckerFactors::Tkfac {
                    sigma: s0,
                    phi: p0,
                    psi: q0,
                },
            ) => Ok(KroneckerFactors::Tkfac {
                sigma: weight * sigma + (1.0 - weight) * s0,
                phi: mix(phi, p0)?,
                psi: mix(psi, q0)?,
            }),
            _ => Err(dims("cannot blend KFAC factors with TKFAC factors")),
        }
    }
}

/// `A = E[a aᵀ]`, `U = E[u uᵀ]`.
pub fn kfac_factors(batch: &LayerGradientBatch) -> KroneckerFactors {
    let n = batch.batch_size() as f64;
    KroneckerFactors::Kfac {
        a: batch.a().tr_mul(batch.a()) / n,
        u: batch.u().tr_mul(batch.u()) / n,
    }
}

/// Trace-restricted factors:
///
/// ```text
/// σ = E[‖a‖²‖u‖²],  Φ = E[‖u‖² a aᵀ] / σ,  Ψ = E[‖a‖² u uᵀ] / σ
/// ```
pub fn tkfac_factors(batch: &LayerGradientBatch) -> Result<KroneckerFactors> {
    let (a, u) = (batch.a(), batch.u());
    let n = batch.batch_size() as f64;
    let a_sq: Vec<f64> = a.row_iter().map(|r| r.norm_squared()).collect();
    let u_sq: Vec<f64> = u.row_iter().map(|r| r.norm_squared()).collect();

    let sigma = a_sq.iter().zip(&u_sq).map(|(x, y)| x * y).sum::<f64>() / n;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::DegenerateBatch(
            "every sample has a zero activation or zero gradient".into(),
        ));
    }

    let mut weighted_a = a.clone();
    for (mut row, w) in weighted_a.row_iter_mut().zip(&u_sq) {
        row *= *w;
    }
    let mut weighted_u = u.clone();
    for (mut row, w) in weighted_u.row_iter_mut().zip(&a_sq) {
        row *= *w;
    }
    let norm = n * sigma;
    Ok(KroneckerFactors::Tkfac {
        sigma,
        phi: a.tr_mul(&weighted_a) / norm,
        psi: u.tr_mul(&weighted_u) / norm,
    })
}

/// `‖F − F̂‖_F`.
pub fn approximation_error(fisher: &ExactBlockFim, approx: &Matrix) -> Result<f64> {
    if fisher.matrix.shape() != approx.shape() {
        return Err(dims(format!(
            "Fisher block is {:?}, approximation is {:?}",
            fisher.matrix.shape(),
            approx.shape()
        )));
    }
    Ok((&fisher.matrix - approx).norm())
}
