//! Dense kernel shared by every other module.
//!
//! Storage is `nalgebra`'s column-major [`DMatrix`], so [`vec`] is a plain copy of the
//! backing slice. The column-stacking convention fixes the Kronecker identity used
//! throughout the crate:
//!
//! ```text
//! (A ⊗ B) vec(X) = vec(B X Aᵀ)
//! ```
//!
//! With a per-sample weight gradient `u aᵀ` this gives `vec(u aᵀ) = a ⊗ u`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{dims, Error, Result};

pub type Matrix = DMatrix<f64>;
pub type DiagVector = DVector<f64>;

/// Symmetric eigendecomposition `M = basis · diag(values) · basisᵀ`, values descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub basis: Matrix,
    pub values: DiagVector,
}

impl EigenPair {
    pub fn reconstruct(&self) -> Matrix {
        &self.basis * Matrix::from_diagonal(&self.values) * self.basis.transpose()
    }
}

/// Column-stacking vectorization.
pub fn vec(x: &Matrix) -> DiagVector {
    DVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &DiagVector, rows: usize, cols: usize) -> Result<Matrix> {
    if v.len() != rows * cols {
        return Err(dims(format!(
            "cannot reshape vector of length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(Matrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Dense Kronecker product. Block `(i, j)` of the result is `a[(i, j)] * b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            out.view_mut((i * br, j * bc), (br, bc))
                .zip_apply(b, |o, bv| *o = aij * bv);
        }
    }
    out
}

/// Kronecker product of two vectors, ordered to match [`kron`] on column vectors.
pub fn kron_vec(a: &DiagVector, b: &DiagVector) -> DiagVector {
    let mut out = DVector::zeros(a.len() * b.len());
    for (i, &ai) in a.iter().enumerate() {
        for (k, &bk) in b.iter().enumerate() {
            out[i * b.len() + k] = ai * bk;
        }
    }
    out
}

/// Computes `(A ⊗ B) x` as `vec(B X Aᵀ)` without forming the Kronecker product.
pub fn kron_matvec(a: &Matrix, b: &Matrix, x: &DiagVector) -> Result<DiagVector> {
    if x.len() != a.ncols() * b.ncols() {
        return Err(dims(format!(
            "kron_matvec: vector length {} does not match {}*{}",
            x.len(),
            a.ncols(),
            b.ncols()
        )));
    }
    let xm = unvec(x, b.ncols(), a.ncols())?;
    Ok(vec(&(b * xm * a.transpose())))
}

fn ensure_square(m: &Matrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Result<Matrix> {
    ensure_square(m)?;
    Ok((m + m.transpose()) * 0.5)
}

/// Eigendecomposition of the symmetric part of `m`, eigenvalues in descending order.
pub fn sym_eig(m: &Matrix) -> Result<EigenPair> {
    let sym = symmetrize(m)?;
    let n = sym.nrows();
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut basis = Matrix::zeros(n, n);
    let mut values = DVector::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        basis.set_column(dst, &eig.eigenvectors.column(src));
        values[dst] = eig.eigenvalues[src];
    }
    Ok(EigenPair { basis, values })
}

/// [`sym_eig`] for matrices that are PSD by construction: negative eigenvalues are
/// round-off and are clamped to zero.
pub fn sym_eig_psd(m: &Matrix) -> Result<EigenPair> {
    let mut pair = sym_eig(m)?;
    pair.values.apply(|v| *v = v.max(0.0));
    Ok(pair)
}

pub fn trace(m: &Matrix) -> Result<f64> {
    ensure_square(m)?;
    Ok(m.trace())
}

pub fn frobenius_norm(m: &Matrix) -> f64 {
    m.norm()
}

/// `‖a − b‖_F / ‖b‖_F`, falling back to the absolute error when `b` is zero.
pub fn relative_frobenius_error(a: &Matrix, b: &Matrix) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
