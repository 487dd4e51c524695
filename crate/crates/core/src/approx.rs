//! The four eigenbasis preconditioners.
//!
//! Every method shares one shape: project the layer gradient into a
//! Kronecker-factored eigenbasis `Q_in ⊗ Q_out`, divide coordinate-wise by a
//! damped re-scaling diagonal, and project back. They differ in which factors
//! produce the basis and which diagonal is used:
//!
//! | method | factors        | re-scaling diagonal                        |
//! |--------|----------------|--------------------------------------------|
//! | KFAC   | `A ⊗ U`        | `Λ_A ⊗ Λ_U`                                |
//! | EKFAC  | `A ⊗ U`        | `E[((Q_A ⊗ Q_U)ᵀ g)²]`                     |
//! | TKFAC  | `σ Φ ⊗ Ψ`      | `σ (Λ_Φ ⊗ Λ_Ψ)`                            |
//! | TEKFAC | `σ Φ ⊗ Ψ`      | `E[((Q_Φ ⊗ Q_Ψ)ᵀ g)²]`                     |
//!
//! The second-moment diagonal is taken over per-sample gradients `g`.

use nalgebra::DVector;

use crate::error::{dims, Error, Result};
use crate::fim::{kfac_factors, tkfac_factors, KroneckerFactors};
use crate::linalg::{kron, kron_vec, sym_eig_psd, vec, DiagVector, Matrix};
use crate::network::LayerGradientBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Kfac,
    Ekfac,
    Tkfac,
    Tekfac,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Kfac, Method::Ekfac, Method::Tkfac, Method::Tekfac];

    /// Whether the factors are the trace-restricted `σ Φ ⊗ Ψ` form.
    pub fn trace_restricted(self) -> bool {
        matches!(self, Method::Tkfac | Method::Tekfac)
    }

    /// Whether the re-scaling diagonal is re-estimated from projected gradients.
    pub fn corrected_rescaling(self) -> bool {
        matches!(self, Method::Ekfac | Method::Tekfac)
    }

    pub fn factors(self, batch: &LayerGradientBatch) -> Result<KroneckerFactors> {
        if self.trace_restricted() {
            tkfac_factors(batch)
        } else {
            Ok(kfac_factors(batch))
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Kfac => "kfac",
            Method::Ekfac => "ekfac",
            Method::Tkfac => "tkfac",
            Method::Tekfac => "tekfac",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

/// Orthogonal factor bases and their eigenvalues, defining `Q_in ⊗ Q_out`.
///
/// Coordinate `c · out + r` of the eigenbasis pairs input eigenvector `c` with
/// output eigenvector `r`, matching the column-stacking `vec`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenbasis {
    in_basis: Matrix,
    out_basis: Matrix,
    in_values: DiagVector,
    out_values: DiagVector,
}

impl Eigenbasis {
    pub fn new(
        in_basis: Matrix,
        out_basis: Matrix,
        in_values: DiagVector,
        out_values: DiagVector,
    ) -> Result<Self> {
        if !in_basis.is_square() || !out_basis.is_square() {
            return Err(dims("eigenbases must be square"));
        }
        if in_values.len() != in_basis.nrows() || out_values.len() != out_basis.nrows() {
            return Err(dims("eigenvalue count does not match basis size"));
        }
        Ok(Self {
            in_basis,
            out_basis,
            in_values,
            out_values,
        })
    }

    /// Standard basis with unit eigenvalues.
    pub fn identity(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_basis: Matrix::identity(in_dim, in_dim),
            out_basis: Matrix::identity(out_dim, out_dim),
            in_values: DVector::from_element(in_dim, 1.0),
            out_values: DVector::from_element(out_dim, 1.0),
        }
    }

    pub fn in_basis(&self) -> &Matrix {
        &self.in_basis
    }

    pub fn out_basis(&self) -> &Matrix {
        &self.out_basis
    }

    pub fn in_values(&self) -> &DiagVector {
        &self.in_values
    }

    pub fn out_values(&self) -> &DiagVector {
        &self.out_values
    }

    pub fn in_dim(&self) -> usize {
        self.in_basis.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.out_basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.in_dim() * self.out_dim()
    }

    fn check_shape(&self, g: &Matrix) -> Result<()> {
        if g.shape() != (self.out_dim(), self.in_dim()) {
            return Err(dims(format!(
                "gradient is {:?}, basis expects {}x{}",
                g.shape(),
                self.out_dim(),
                self.in_dim()
            )));
        }
        Ok(())
    }

    /// `Q_outᵀ G Q_in`, whose `vec` is `(Q_in ⊗ Q_out)ᵀ vec(G)`.
    pub fn project(&self, g: &Matrix) -> Result<Matrix> {
        self.check_shape(g)?;
        Ok(self.out_basis.tr_mul(g) * &self.in_basis)
    }

    /// `Q_out X Q_inᵀ`, whose `vec` is `(Q_in ⊗ Q_out) vec(X)`.
    pub fn back_project(&self, x: &Matrix) -> Result<Matrix> {
        self.check_shape(x)?;
        Ok(&self.out_basis * x * self.in_basis.transpose())
    }

    /// Dense `Q_in ⊗ Q_out`.
    pub fn dense(&self) -> Matrix {
        kron(&self.in_basis, &self.out_basis)
    }

    /// Dense `(Q_in ⊗ Q_out) diag(d) (Q_in ⊗ Q_out)ᵀ`.
    pub fn reconstruct(&self, diag: &DiagVector) -> Result<Matrix> {
        if diag.len() != self.dim() {
            return Err(dims(format!(
                "diagonal has {} entries, basis has dimension {}",
                diag.len(),
                self.dim()
            )));
        }
        let q = self.dense();
        let mut scaled = q.clone();
        for (mut col, d) in scaled.column_iter_mut().zip(diag.iter()) {
            col *= *d;
        }
        Ok(scaled * q.transpose())
    }
}

/// Eigendecomposes both factors; eigenvalues are clamped at zero.
pub fn compute_eigenbasis(factors: &KroneckerFactors) -> Result<Eigenbasis> {
    let input = sym_eig_psd(factors.input_factor())?;
    let output = sym_eig_psd(factors.output_factor())?;
    Eigenbasis::new(input.basis, output.basis, input.values, output.values)
}

/// `(Q_in ⊗ Q_out)ᵀ vec(G)`.
pub fn project_gradient(basis: &Eigenbasis, g: &Matrix) -> Result<DiagVector> {
    Ok(vec(&basis.project(g)?))
}

/// Second moment of each eigen-coordinate of the per-sample gradients.
///
/// The projected per-sample gradient `Q_outᵀ u aᵀ Q_in` is rank one, so the
/// squared coordinates factor as `(Q_outᵀ u)_r² (Q_inᵀ a)_c²`.
pub fn rescaling_from_batch(basis: &Eigenbasis, batch: &LayerGradientBatch) -> Result<DiagVector> {
    if batch.in_dim() != basis.in_dim() || batch.out_dim() != basis.out_dim() {
        return Err(dims(format!(
            "batch block is {}x{}, basis is {}x{}",
            batch.in_dim(),
            batch.out_dim(),
            basis.in_dim(),
            basis.out_dim()
        )));
    }
    let a_proj = (batch.a() * &basis.in_basis).map(|v| v * v);
    let u_proj = (batch.u() * &basis.out_basis).map(|v| v * v);
    let theta = u_proj.tr_mul(&a_proj) / batch.batch_size() as f64;
    Ok(vec(&theta))
}

/// Uncorrected re-scaling `scale · (Λ_in ⊗ Λ_out)`.
pub fn naive_rescaling(basis: &Eigenbasis, scale: f64) -> DiagVector {
    kron_vec(&basis.in_values, &basis.out_values) * scale
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DampingMode {
    /// Constant `λ`.
    Fixed { lambda: f64 },
    /// `λ = max(tr(Θ), ϑ) / dim(Θ)`.
    AutoTrace { vartheta: f64 },
}

impl DampingMode {
    pub fn lambda_for(&self, theta: &DiagVector) -> f64 {
        match *self {
            DampingMode::Fixed { lambda } => lambda,
            DampingMode::AutoTrace { vartheta } => theta.sum().max(vartheta) / theta.len() as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DampingMode::Fixed { lambda } if !(lambda >= 0.0) || !lambda.is_finite() => {
                Err(Error::InvalidConfig(format!(
                    "fixed damping must be finite and >= 0, got {lambda}"
                )))
            }
            DampingMode::AutoTrace { vartheta } if !(vartheta > 0.0) || !vartheta.is_finite() => {
                Err(Error::InvalidConfig(format!(
                    "trace floor must be finite and > 0, got {vartheta}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Re-scaling diagonal plus the damping added to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Rescaling {
    pub theta: DiagVector,
    pub lambda: f64,
}

impl Rescaling {
    pub fn trace(&self) -> f64 {
        self.theta.sum()
    }

    /// `Θ + λ`.
    pub fn divisors(&self) -> DiagVector {
        self.theta.add_scalar(self.lambda)
    }
}

pub fn apply_damping(theta: DiagVector, mode: DampingMode) -> Rescaling {
    let lambda = mode.lambda_for(&theta);
    Rescaling { theta, lambda }
}

/// `weight · new + (1 − weight) · old`.
fn blend_diag(new: &DiagVector, old: &DiagVector, weight: f64) -> Result<DiagVector> {
    if new.len() != old.len() {
        return Err(dims("re-scaling vectors differ in length"));
    }
    Ok(new * weight + old * (1.0 - weight))
}

/// Read-only view of a layer's curvature state for diagnostics export.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    pub method: Method,
    pub sigma: f64,
    pub in_values: DiagVector,
    pub out_values: DiagVector,
    pub theta: DiagVector,
    pub lambda: f64,
}

/// Per-layer curvature state of one method.
///
/// The factors are EMA-smoothed with `β₂`, the corrected re-scaling with `β₁`;
/// the newest estimate carries the coefficient. The first refresh of each
/// quantity replaces the empty state.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodState {
    method: Method,
    factors: Option<KroneckerFactors>,
    basis: Option<Eigenbasis>,
    rescaling: Option<Rescaling>,
}

impl MethodState {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            factors: None,
            basis: None,
            rescaling: None,
        }
    }

    /// State assembled from explicit parts, e.g. a restored snapshot.
    pub fn from_parts(
        method: Method,
        factors: KroneckerFactors,
        basis: Eigenbasis,
        rescaling: Rescaling,
    ) -> Result<Self> {
        if factors.is_trace_restricted() != method.trace_restricted() {
            return Err(dims(format!(
                "factor variant does not match method {method}"
            )));
        }
        if factors.block_dim() != basis.dim() || rescaling.theta.len() != basis.dim() {
            return Err(dims(
                "factors, basis and re-scaling disagree on the block dimension",
            ));
        }
        Ok(Self {
            method,
            factors: Some(factors),
            basis: Some(basis),
            rescaling: Some(rescaling),
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn factors(&self) -> Option<&KroneckerFactors> {
        self.factors.as_ref()
    }

    pub fn basis(&self) -> Option<&Eigenbasis> {
        self.basis.as_ref()
    }

    pub fn rescaling(&self) -> Option<&Rescaling> {
        self.rescaling.as_ref()
    }

    pub fn sigma(&self) -> Option<f64> {
        self.factors.as_ref().map(KroneckerFactors::scale)
    }

    pub fn is_ready(&self) -> bool {
        self.factors.is_some() && self.basis.is_some() && self.rescaling.is_some()
    }

    /// Blends new factor and/or re-scaling estimates into the state. The
    /// damping `λ` is kept; callers re-derive it with [`MethodState::redamp`].
    pub fn ema_update(
        &mut self,
        new_factors: Option<KroneckerFactors>,
        new_theta: Option<DiagVector>,
        beta1: f64,
        beta2: f64,
    ) -> Result<()> {
        for (name, beta) in [("beta1", beta1), ("beta2", beta2)] {
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in (0, 1], got {beta}"
                )));
            }
        }
        if let Some(new) = new_factors {
            if new.is_trace_restricted() != self.method.trace_restricted() {
                return Err(dims(format!(
                    "factor variant does not match method {}",
                    self.method
                )));
            }
            self.factors = Some(match &self.factors {
                Some(old) => new.blend(old, beta2)?,
                None => new,
            });
        }
        if let Some(new) = new_theta {
            self.rescaling = Some(match &self.rescaling {
                Some(old) => Rescaling {
                    theta: blend_diag(&new, &old.theta, beta1)?,
                    lambda: old.lambda,
                },
                None => Rescaling {
                    theta: new,
                    lambda: 0.0,
                },
            });
        }
        Ok(())
    }

    /// Recomputes `λ` from the current re-scaling diagonal.
    pub fn redamp(&mut self, damping: DampingMode) {
        if let Some(r) = &mut self.rescaling {
            r.lambda = damping.lambda_for(&r.theta);
        }
    }

    /// Re-estimates the factors from a batch.
    pub fn refresh_factors(&mut self, batch: &LayerGradientBatch, beta2: f64) -> Result<()> {
        let new = self.method.factors(batch)?;
        self.ema_update(Some(new), None, 1.0, beta2)
    }

    /// Re-diagonalizes the current factors. Methods without re-scaling
    /// correction take their diagonal from the new eigenvalues here.
    pub fn refresh_eigenbasis(&mut self, damping: DampingMode) -> Result<()> {
        let factors = self.factors.as_ref().ok_or(Error::Uninitialized(
            "factors must be estimated before the eigenbasis",
        ))?;
        let basis = compute_eigenbasis(factors)?;
        if !self.method.corrected_rescaling() {
            let scale = factors.scale();
            self.rescaling = Some(apply_damping(naive_rescaling(&basis, scale), damping));
        }
        self.basis = Some(basis);
        Ok(())
    }

    /// Re-estimates the re-scaling diagonal in the current (possibly stale)
    /// eigenbasis and re-derives `λ`.
    pub fn refresh_rescaling(
        &mut self,
        batch: &LayerGradientBatch,
        beta1: f64,
        damping: DampingMode,
    ) -> Result<()> {
        let basis = self.basis.as_ref().ok_or(Error::Uninitialized(
            "eigenbasis must be computed before re-scaling",
        ))?;
        if !self.method.corrected_rescaling() {
            let naive = naive_rescaling(basis, self.sigma().unwrap_or(1.0));
            self.rescaling = Some(apply_damping(naive, damping));
            return Ok(());
        }
        let theta = rescaling_from_batch(basis, batch)?;
        self.ema_update(None, Some(theta), beta1, 1.0)?;
        self.redamp(damping);
        Ok(())
    }

    /// The uncorrected diagonal `σ (Λ_in ⊗ Λ_out)` for the current basis.
    pub fn naive_rescaling(&self) -> Result<DiagVector> {
        let basis = self
            .basis
            .as_ref()
            .ok_or(Error::Uninitialized("eigenbasis"))?;
        Ok(naive_rescaling(basis, self.sigma().unwrap_or(1.0)))
    }

    /// Divisors applied to the eigen-coordinates.
    ///
    /// KFAC damps its factors instead of the diagonal, giving
    /// `(λ_in + √λ)(λ_out + √λ)`, i.e. `(A + √λ I)⁻¹ ⊗ (U + √λ I)⁻¹`.
    pub fn divisors(&self) -> Result<DiagVector> {
        let rescaling = self
            .rescaling
            .as_ref()
            .ok_or(Error::Uninitialized("re-scaling"))?;
        let basis = self
            .basis
            .as_ref()
            .ok_or(Error::Uninitialized("eigenbasis"))?;
        let divisors = match self.method {
            Method::Kfac => {
                let root = rescaling.lambda.sqrt();
                kron_vec(
                    &basis.in_values.add_scalar(root),
                    &basis.out_values.add_scalar(root),
                )
            }
            _ => rescaling.divisors(),
        };
        if let Some((index, &value)) = divisors.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::SingularRescaling { index, value });
        }
        Ok(divisors)
    }

    /// Maps a weight gradient (`out × in`, bias column last) to its
    /// preconditioned direction.
    pub fn precondition(&self, g: &Matrix) -> Result<Matrix> {
        if !self.is_ready() {
            return Err(Error::Uninitialized(
                "precondition needs factors, eigenbasis and re-scaling",
            ));
        }
        let basis = self.basis.as_ref().expect("checked by is_ready");
        let divisors = self.divisors()?;
        let mut coords = basis.project(g)?;
        coords
            .as_mut_slice()
            .iter_mut()
            .zip(divisors.iter())
            .for_each(|(x, d)| *x /= d);
        basis.back_project(&coords)
    }

    pub fn snapshot(&self) -> Option<StateSnapshot> {
        let basis = self.basis.as_ref()?;
        let rescaling = self.rescaling.as_ref()?;
        Some(StateSnapshot {
            method: self.method,
            sigma: self.sigma()?,
            in_values: basis.in_values.clone(),
            out_values: basis.out_values.clone(),
            theta: rescaling.theta.clone(),
            lambda: rescaling.lambda,
        })
    }
}

/// Undamped, un-smoothed approximation of one Fisher block from a single batch.
#[derive(Debug, Clone)]
pub struct BlockApproximation {
    pub method: Method,
    pub factors: KroneckerFactors,
    pub basis: Eigenbasis,
    /// Re-scaling diagonal in the eigenbasis.
    pub diag: DiagVector,
}

impl BlockApproximation {
    pub fn from_batch(method: Method, batch: &LayerGradientBatch) -> Result<Self> {
        let factors = method.factors(batch)?;
        let basis = compute_eigenbasis(&factors)?;
        let diag = if method.corrected_rescaling() {
            rescaling_from_batch(&basis, batch)?
        } else {
            naive_rescaling(&basis, factors.scale())
        };
        Ok(Self {
            method,
            factors,
            basis,
            diag,
        })
    }

    /// Dense `Q diag Qᵀ`.
    pub fn dense(&self) -> Result<Matrix> {
        self.basis.reconstruct(&self.diag)
    }

    pub fn trace(&self) -> f64 {
        self.diag.sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fim::exact_block_fim;
    use crate::linalg::relative_frobenius_error;

    fn sample_batch() -> LayerGradientBatch {
        let a = Matrix::from_fn(7, 3, |i, j| {
            if j == 2 {
                1.0
            } else {
                ((i * 5 + j * 3) as f64 * 0.71).sin()
            }
        });
        let u = Matrix::from_fn(7, 2, |i, j| ((i * 2 + j * 7) as f64 * 0.43).cos() * 0.3);
        LayerGradientBatch::new(a, u).unwrap()
    }

    #[test]
    fn uniform_factor_spectrum() {
        let n = 4;
        let f = KroneckerFactors::Tkfac {
            sigma: 1.0,
            phi: Matrix::identity(n, n) / n as f64,
            psi: Matrix::identity(2, 2) / 2.0,
        };
        let b = compute_eigenbasis(&f).unwrap();
        assert!(b.in_values().iter().all(|v| (v - 0.25).abs() < 1e-15));
        let qtq = b.in_basis().tr_mul(b.in_basis());
        assert!((qtq - Matrix::identity(n, n)).amax() < 1e-12);
    }

    #[test]
    fn diagonal_factor_gives_sorted_permutation() {
        let phi = Matrix::from_diagonal(&DVector::from_vec(vec![0.2, 0.5, 0.3]));
        let f = KroneckerFactors::Tkfac {
            sigma: 2.0,
            phi: phi.clone(),
            psi: Matrix::identity(1, 1),
        };
        let b = compute_eigenbasis(&f).unwrap();
        assert_eq!(b.in_values().as_slice(), &[0.5, 0.3, 0.2]);
        for v in b.in_basis().iter() {
            assert!(v.abs() < 1e-15 || (v.abs() - 1.0).abs() < 1e-15);
        }
        let recon = b.in_basis() * Matrix::from_diagonal(b.in_values()) * b.in_basis().transpose();
        assert!(relative_frobenius_error(&recon, &phi) < 1e-8);
    }

    #[test]
    fn identity_basis_projection() {
        let basis = Eigenbasis::identity(3, 2);
        let g = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(project_gradient(&basis, &g).unwrap(), vec(&g));
        assert!(project_gradient(&basis, &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn projection_round_trip() {
        let batch = sample_batch();
        let basis = compute_eigenbasis(&kfac_factors(&batch)).unwrap();
        let g = batch.mean_gradient();
        let back = basis.back_project(&basis.project(&g).unwrap()).unwrap();
        assert!(relative_frobenius_error(&back, &g) < 1e-12);
    }

    #[test]
    fn projection_matches_dense_kron() {
        let batch = sample_batch();
        let basis = compute_eigenbasis(&tkfac_factors(&batch).unwrap()).unwrap();
        let g = batch.mean_gradient();
        let dense = kron(basis.in_basis(), basis.out_basis()).transpose() * vec(&g);
        let fast = project_gradient(&basis, &g).unwrap();
        assert!((fast - &dense).norm() <= 1e-12 * dense.norm());
    }

    #[test]
    fn identity_basis_rescaling_is_fim_diagonal() {
        let batch = sample_batch();
        let basis = Eigenbasis::identity(3, 2);
        let theta = rescaling_from_batch(&basis, &batch).unwrap();
        let f = exact_block_fim(&batch).unwrap();
        assert!((theta - f.matrix().diagonal()).amax() < 1e-15);
    }

    #[test]
    fn single_sample_rescaling() {
        let a = Matrix::from_row_slice(1, 3, &[0.5, -1.0, 1.0]);
        let u = Matrix::from_row_slice(1, 2, &[2.0, 0.25]);
        let batch = LayerGradientBatch::new(a, u).unwrap();
        let basis = compute_eigenbasis(&tkfac_factors(&batch).unwrap()).unwrap();
        let theta = rescaling_from_batch(&basis, &batch).unwrap();
        let proj = project_gradient(&basis, &batch.sample_gradient(0)).unwrap();
        let expected = proj.map(|v| v * v);
        assert!((theta - &expected).amax() < 1e-12 * expected.amax());
    }

    #[test]
    fn rescaling_sum_is_fim_trace() {
        let batch = sample_batch();
        let f = exact_block_fim(&batch).unwrap();
        for method in [Method::Ekfac, Method::Tekfac] {
            let basis = compute_eigenbasis(&method.factors(&batch).unwrap()).unwrap();
            let theta = rescaling_from_batch(&basis, &batch).unwrap();
            assert!((theta.sum() - f.trace()).abs() <= 1e-10 * f.trace());
        }
    }

    #[test]
    fn naive_rescaling_cases() {
        let basis = Eigenbasis::identity(3, 2);
        assert_eq!(naive_rescaling(&basis, 1.0), DVector::from_element(6, 1.0));

        let a = Matrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0]));
        let u = Matrix::from_diagonal(&DVector::from_vec(vec![5.0, 1.0]));
        let basis = compute_eigenbasis(&KroneckerFactors::Kfac { a, u }).unwrap();
        assert_eq!(
            naive_rescaling(&basis, 1.0).as_slice(),
            &[15.0, 3.0, 10.0, 2.0]
        );
    }

    #[test]
    fn rank_one_naive_rescaling_matches_fim_spectrum() {
        let a = Matrix::from_row_slice(1, 3, &[0.5, -1.0, 1.0]);
        let u = Matrix::from_row_slice(1, 2, &[2.0, 0.25]);
        let batch = LayerGradientBatch::new(a, u).unwrap();
        let f = exact_block_fim(&batch).unwrap();
        let mut spectrum: Vec<f64> = crate::linalg::sym_eig(f.matrix())
            .unwrap()
            .values
            .iter()
            .copied()
            .collect();
        let st = BlockApproximation::from_batch(Method::Tkfac, &batch).unwrap();
        let mut naive: Vec<f64> = st.diag.iter().copied().collect();
        spectrum.sort_by(f64::total_cmp);
        naive.sort_by(f64::total_cmp);
        for (x, y) in spectrum.iter().zip(&naive) {
            assert!((x - y).abs() < 1e-12 * f.trace());
        }
    }

    #[test]
    fn damping_examples() {
        let theta = DVector::from_element(10, 0.05);
        let r = apply_damping(theta, DampingMode::AutoTrace { vartheta: 0.01 });
        assert!((r.lambda - 0.05).abs() < 1e-15);

        let theta = DVector::from_element(10, 0.0001);
        let r = apply_damping(theta, DampingMode::AutoTrace { vartheta: 0.01 });
        assert!((r.lambda - 0.001).abs() < 1e-15);

        let r = apply_damping(DVector::zeros(4), DampingMode::Fixed { lambda: 1e-3 });
        assert_eq!(r.lambda, 1e-3);
        assert!(r.divisors().iter().all(|&d| d > 0.0));
    }

    #[test]
    fn ema_semantics() {
        let batch = sample_batch();
        let mut state = MethodState::new(Method::Tekfac);
        state
            .ema_update(None, Some(DVector::zeros(6)), 0.95, 0.95)
            .unwrap();
        state
            .ema_update(None, Some(DVector::from_element(6, 1.0)), 0.95, 0.95)
            .unwrap();
        assert!(state
            .rescaling()
            .unwrap()
            .theta
            .iter()
            .all(|&t| (t - 0.95).abs() < 1e-15));

        // beta = 1 replaces.
        let f = tkfac_factors(&batch).unwrap();
        state.ema_update(Some(f.clone()), None, 1.0, 1.0).unwrap();
        state.ema_update(Some(f.clone()), None, 1.0, 1.0).unwrap();
        assert_eq!(state.factors(), Some(&f));

        assert!(state.ema_update(None, None, 0.0, 0.5).is_err());
        assert!(state
            .ema_update(Some(kfac_factors(&batch)), None, 0.5, 0.5)
            .is_err());
    }

    #[test]
    fn precondition_requires_refresh() {
        let state = MethodState::new(Method::Tekfac);
        assert!(matches!(
            state.precondition(&Matrix::zeros(2, 3)),
            Err(Error::Uninitialized(_))
        ));
    }

    #[test]
    fn unit_divisors_leave_gradient_unchanged() {
        let batch = sample_batch();
        let mut state = MethodState::new(Method::Tekfac);
        state.refresh_factors(&batch, 0.95).unwrap();
        state
            .refresh_eigenbasis(DampingMode::Fixed { lambda: 0.0 })
            .unwrap();
        state
            .ema_update(None, Some(DVector::from_element(6, 0.5)), 1.0, 1.0)
            .unwrap();
        state.redamp(DampingMode::Fixed { lambda: 0.5 });
        let g = batch.mean_gradient();
        let p = state.precondition(&g).unwrap();
        assert!(relative_frobenius_error(&p, &g) < 1e-12);
    }

    #[test]
    fn huge_damping_is_scaled_gradient() {
        let batch = sample_batch();
        let lambda = 1e12;
        for method in Method::ALL {
            let mut state = MethodState::new(method);
            let damping = DampingMode::Fixed { lambda };
            state.refresh_factors(&batch, 0.95).unwrap();
            state.refresh_eigenbasis(damping).unwrap();
            state.refresh_rescaling(&batch, 0.95, damping).unwrap();
            let g = batch.mean_gradient();
            let p = state.precondition(&g).unwrap();
            // KFAC damps each factor by sqrt(lambda), so its product is also ~lambda.
            let expected = &g / lambda;
            assert!(relative_frobenius_error(&p, &expected) < 1e-5, "{method}");
        }
    }

    #[test]
    fn undamped_zero_divisor_is_reported() {
        // One sample: Θ has zeros off the rank-one direction.
        let a = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let u = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let batch = LayerGradientBatch::new(a, u).unwrap();
        let mut state = MethodState::new(Method::Tekfac);
        let damping = DampingMode::Fixed { lambda: 0.0 };
        state.refresh_factors(&batch, 1.0).unwrap();
        state.refresh_eigenbasis(damping).unwrap();
        state.refresh_rescaling(&batch, 1.0, damping).unwrap();
        assert!(matches!(
            state.precondition(&batch.mean_gradient()),
            Err(Error::SingularRescaling { .. })
        ));
    }

    #[test]
    fn method_parsing() {
        assert_eq!("TEKFAC".parse::<Method>().unwrap(), Method::Tekfac);
        assert!("sgd".parse::<Method>().is_err());
    }
}
