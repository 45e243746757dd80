//! Small dense helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::{LqrError, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn check_finite(name: &str, m: &Mat) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LqrError::NonFinite(name.to_string()))
    }
}

pub fn check_square(name: &str, m: &Mat) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(LqrError::Dimension(format!(
            "{name} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(LqrError::Dimension(format!("{name} must be at least 1x1")));
    }
    Ok(m.nrows())
}

pub fn check_shape(name: &str, m: &Mat, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(LqrError::Dimension(format!(
            "{name} must be {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Frobenius inner product `trace(AᵀB)`.
pub fn inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Largest singular value.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().fold(0.0_f64, |acc, &s| acc.max(s))
}

pub fn sym_eigenvalues(m: &Mat) -> Vector {
    symmetrize(m).symmetric_eigenvalues()
}

pub fn min_eig(m: &Mat) -> f64 {
    sym_eigenvalues(m).min()
}

pub fn max_eig(m: &Mat) -> f64 {
    sym_eigenvalues(m).max()
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn sym_sqrt(m: &Mat) -> Mat {
    let eig = symmetrize(m).symmetric_eigen();
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * Mat::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Inverse square root of a symmetric positive definite matrix.
pub fn sym_inv_sqrt(m: &Mat) -> Result<Mat> {
    let eig = symmetrize(m).symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(LqrError::NotPositiveDefinite("inverse square root".into()));
    }
    let d = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    Ok(&eig.eigenvectors * Mat::from_diagonal(&d) * eig.eigenvectors.transpose())
}

pub fn inverse(name: &str, m: &Mat) -> Result<Mat> {
    m.clone()
        .try_inverse()
        .filter(|inv| inv.iter().all(|x| x.is_finite()))
        .ok_or_else(|| LqrError::Singular(format!("{name} is not invertible")))
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(name: &str, m: &Mat) -> Result<Mat> {
    symmetrize(m)
        .cholesky()
        .map(|c| symmetrize(&c.inverse()))
        .ok_or_else(|| LqrError::NotPositiveDefinite(name.to_string()))
}

/// Column-major vectorization.
pub fn vec_of(m: &Mat) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &Vector, rows: usize, cols: usize) -> Mat {
    Mat::from_column_slice(rows, cols, v.as_slice())
}

pub fn relative_error(got: &Mat, want: &Mat) -> f64 {
    let scale = want.norm();
    let diff = (got - want).norm();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let m = Mat::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = sym_sqrt(&m);
        assert!((&s * &s - &m).norm() < 1e-12);
        let is = sym_inv_sqrt(&m).unwrap();
        assert!((&is * &m * &is - Mat::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = Mat::from_diagonal(&Vector::from_vec(vec![-3.0, 2.0]));
        assert!((spectral_norm(&m) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn shape_checks() {
        assert!(check_square("F", &Mat::zeros(2, 3)).is_err());
        assert!(check_square("F", &Mat::zeros(0, 0)).is_err());
        assert!(check_finite("F", &Mat::from_element(1, 1, f64::NAN)).is_err());
    }
}
