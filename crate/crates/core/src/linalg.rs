//! Small dense helpers shared by the numerical modules.

use nalgebra::{Complex, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Relative eigenvalue floor used when inverting sample covariances.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// 1-norm (max column sum) of a complex matrix.
pub fn norm1_complex(m: &DMatrix<C64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverts a complex matrix by LU with partial pivoting and returns the
/// inverse together with its 1-norm condition number.
pub fn inverse_with_condition(m: &DMatrix<C64>) -> Option<(DMatrix<C64>, f64)> {
    let n = m.nrows();
    if n == 0 {
        return Some((DMatrix::zeros(0, 0), 1.0));
    }
    let inv = m.clone().lu().try_inverse()?;
    if inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return None;
    }
    let cond = norm1_complex(m) * norm1_complex(&inv);
    Some((inv, cond))
}

/// Largest entry of |M - M^T|.
pub fn max_asymmetry<T>(m: &DMatrix<T>) -> f64
where
    T: nalgebra::ComplexField<RealField = f64> + Copy,
{
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).modulus());
        }
    }
    worst
}

/// Inverse of a symmetric positive definite matrix through its
/// eigendecomposition. Returns the inverse and the spectral condition number.
///
/// Fails when the smallest eigenvalue is below `EIGEN_FLOOR * lambda_max`
/// or the condition number exceeds `max_condition`.
pub fn spd_inverse(m: &DMatrix<f64>, max_condition: f64) -> Result<(DMatrix<f64>, f64)> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(lmax > 0.0) || lmin <= EIGEN_FLOOR * lmax {
        return Err(Error::IllConditioned {
            condition: if lmin > 0.0 { lmax / lmin } else { f64::INFINITY },
        });
    }
    let condition = lmax / lmin;
    if condition > max_condition {
        return Err(Error::IllConditioned { condition });
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
    let inv = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    Ok((inv, condition))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Picks rows and columns `idx` out of a square matrix.
pub fn select_square<T: nalgebra::Scalar + Copy>(m: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

pub fn select_block<T: nalgebra::Scalar + Copy>(
    m: &DMatrix<T>,
    rows: &[usize],
    cols: &[usize],
) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values))
}

/// Eigenvalues of a real square matrix through a real Schur form.
/// Returns `None` when the QR iteration does not converge.
pub fn eigenvalues(a: &DMatrix<f64>) -> Option<Vec<C64>> {
    if a.nrows() == 0 {
        return Some(Vec::new());
    }
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 10_000)?;
    Some(schur.complex_eigenvalues().iter().cloned().collect())
}

/// Largest real part among the eigenvalues of `a`.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Option<f64> {
    eigenvalues(a).map(|ev| ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}
