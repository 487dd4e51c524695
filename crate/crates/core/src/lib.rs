//! Kronecker-factored natural-gradient preconditioners for small dense networks.
//!
//! The crate covers four curvature approximations of a layer's Fisher block:
//!
//! * **KFAC**: `A ⊗ U`, with `A = E[a aᵀ]` and `U = E[u uᵀ]`.
//! * **EKFAC**: the KFAC eigenbasis with re-scaling replaced by the second moment
//!   of the projected per-sample gradients.
//! * **TKFAC**: `σ · Φ ⊗ Ψ` with `tr(Φ) = tr(Ψ) = 1`, which keeps the block's trace.
//! * **TEKFAC**: the TKFAC eigenbasis with the corrected second-moment re-scaling.
//!
//! [`fim`] builds the exact per-layer Fisher block from per-sample gradients, which
//! serves as the ground truth for all four approximations. [`optimizer`] drives the
//! interval-gated refresh schedule and the SGDM / Adam baselines.

// Validation writes `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod error;
pub mod fim;
pub mod linalg;
pub mod network;
pub mod optimizer;

pub use approx::{DampingMode, Eigenbasis, Method, MethodState, Rescaling};
pub use error::{Error, Result};
pub use fim::{ExactBlockFim, KroneckerFactors};
pub use linalg::{DiagVector, EigenPair, Matrix};
pub use network::{Activation, DenseNet, LayerGradientBatch, LossReport};
pub use optimizer::{
    FisherFlavor, LrDecay, NaturalGradient, Optimizer, OptimizerConfig, OptimizerKind, Schedule,
    Split, TrainReport,
};
