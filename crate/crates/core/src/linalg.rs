//! Dense complex linear-algebra helpers shared by the optimizers.
//!
//! Everything operates on `nalgebra::DMatrix<Complex64>`. Hermitian
//! functions (square roots, inverse square roots) go through the
//! eigendecomposition of the Hermitian part of their argument so that small
//! round-off asymmetries never leak into the result.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Eigenvalues below this are treated as zero when forming inverse square roots.
pub const INV_SQRT_FLOOR: f64 = 1e-12;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// `(m + mᴴ) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Largest absolute deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigendecomposition of the Hermitian part of `m`. Eigenvalues are returned
/// in the order nalgebra produces them (unsorted); columns of the matrix are
/// the matching eigenvectors.
pub fn herm_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    herm_eig(m).0.into_iter().fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &CMat) -> f64 {
    herm_eig(m).0.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Rebuilds `V diag(f(λ)) Vᴴ` from a Hermitian eigendecomposition.
pub fn herm_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = herm_eig(m);
    let n = vals.len();
    let mut scaled = vecs.clone();
    for (j, &l) in vals.iter().enumerate() {
        let s = f(l);
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    hermitian_part(&(scaled * vecs.adjoint()))
}

/// Principal square root of a PSD matrix; negative eigenvalues clamp at 0.
pub fn psd_sqrt(m: &CMat) -> CMat {
    herm_fn(m, |l| l.max(0.0).sqrt())
}

/// Inverse square root of a PD matrix with eigenvalues floored at
/// [`INV_SQRT_FLOOR`].
pub fn pd_inv_sqrt(m: &CMat) -> CMat {
    herm_fn(m, |l| 1.0 / l.max(INV_SQRT_FLOOR).sqrt())
}

/// Cholesky factor of the Hermitian part of `m`, rejecting matrices that are
/// not positive definite (complex Cholesky in nalgebra does not).
pub fn pd_cholesky(m: &CMat) -> Option<Cholesky<Complex64, Dyn>> {
    let chol = hermitian_part(m).cholesky()?;
    let l = chol.l_dirty();
    let ok = (0..m.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re
    });
    ok.then_some(chol)
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
pub fn pd_inverse(m: &CMat) -> Result<CMat> {
    let chol = pd_cholesky(m).ok_or_else(|| {
        Error::Numerical(format!(
            "Cholesky factorization failed (matrix not positive definite, min eigenvalue {:.3e})",
            min_eigenvalue(m)
        ))
    })?;
    Ok(hermitian_part(&chol.inverse()))
}

/// `log2 |m|` for a Hermitian positive-definite matrix, computed from the
/// Cholesky factor.
pub fn log2_det_pd(m: &CMat) -> Result<f64> {
    let chol = pd_cholesky(m).ok_or_else(|| {
        Error::Numerical(format!(
            "log-determinant of a non positive definite matrix (min eigenvalue {:.3e})",
            min_eigenvalue(m)
        ))
    })?;
    let l = chol.l_dirty();
    let ln: f64 = (0..m.nrows()).map(|i| l[(i, i)].re.ln()).sum();
    Ok(2.0 * ln / std::f64::consts::LN_2)
}

/// Checks that `m` is Hermitian and positive semidefinite within `tol`.
pub fn check_psd(m: &CMat, tol: f64, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Contract(format!(
            "{what} is {}x{}, expected a square matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let defect = hermitian_defect(m);
    if defect > tol * (1.0 + m.norm()) {
        return Err(Error::Contract(format!(
            "{what} is not Hermitian (asymmetry {defect:.3e})"
        )));
    }
    let min = min_eigenvalue(m);
    if min < -tol * (1.0 + m.norm()) {
        return Err(Error::Contract(format!(
            "{what} is not positive semidefinite (min eigenvalue {min:.3e})"
        )));
    }
    Ok(())
}

pub fn trace_re(m: &CMat) -> f64 {
    m.trace().re
}

/// All eigenvalues of a general square complex matrix (diagonal of its
/// complex Schur form).
pub fn eigenvalues(m: &CMat) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), 1e-14, 10_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Eigenvalue of largest modulus of a general square complex matrix.
pub fn max_modulus_eigenvalue(m: &CMat) -> Result<Complex64> {
    Ok(eigenvalues(m)?
        .into_iter()
        .fold(Complex64::new(0.0, 0.0), |best, z| {
            if z.norm() > best.norm() {
                z
            } else {
                best
            }
        }))
}

/// Outer product `col * row` of a column vector and a row vector.
pub fn outer(col: &CVec, row: &nalgebra::RowDVector<Complex64>) -> CMat {
    col * row
}
