//! Small dense-matrix kernel shared by the recursions.
//!
//! Storage is `nalgebra::DMatrix<f64>`; the helpers here add the handful of
//! operations the scheduling code needs on top of it with the tolerances the
//! rest of the crate assumes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalue (or Cholesky pivot) tolerance below zero still accepted as PSD.
pub const PSD_TOL: f64 = 1e-9;

/// Smallest eigenvalue accepted for a positive definite matrix.
pub const PD_TOL: f64 = 1e-12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// `x' M x` over the symmetric part of `M`, as a plain sum of products.
pub fn quadratic_form(x: &DVector<f64>, m: &DMatrix<f64>) -> Result<f64> {
    check_square(m, "quadratic form matrix")?;
    if x.len() != m.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} against {}x{} matrix",
            x.len(),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(quadratic_form_unchecked(x.as_slice(), m))
}

pub(crate) fn quadratic_form_unchecked(x: &[f64], m: &DMatrix<f64>) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += x[i] * m[(i, i)] * x[i];
        for j in (i + 1)..n {
            acc += x[i] * (m[(i, j)] + m[(j, i)]) * x[j];
        }
    }
    acc
}

/// `tr(M1 M2)` without forming the product.
pub fn trace_product(m1: &DMatrix<f64>, m2: &DMatrix<f64>) -> Result<f64> {
    if m1.nrows() != m2.ncols() || m1.ncols() != m2.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "trace of {}x{} times {}x{}",
            m1.nrows(),
            m1.ncols(),
            m2.nrows(),
            m2.ncols()
        )));
    }
    Ok(trace_product_unchecked(m1, m2))
}

pub(crate) fn trace_product_unchecked(m1: &DMatrix<f64>, m2: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..m1.nrows() {
        for j in 0..m1.ncols() {
            acc += m1[(i, j)] * m2[(j, i)];
        }
    }
    acc
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    symmetrize(m).symmetric_eigenvalues().min()
}

/// Lower-triangular factor `L` with `L L' = M` for symmetric PSD `M`.
///
/// Rank-deficient inputs are handled by zeroing the column of any pivot that
/// falls under a scale-relative threshold; the Schur complement of a PSD matrix
/// has a vanishing column wherever its diagonal vanishes, so nothing is lost.
pub fn cholesky_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(m, "Cholesky input")?;
    let n = m.nrows();
    let a = symmetrize(m);
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let zero_tol = (n.max(1) as f64) * f64::EPSILON * scale.max(f64::MIN_POSITIVE) * 16.0;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if d < -PSD_TOL {
            return Err(Error::NotPsd {
                matrix: "Cholesky input",
                min_eigenvalue: d,
            });
        }
        if d <= zero_tol {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Reusable square scratch buffers for covariance recursions.
///
/// Contents carry no meaning between calls.
#[derive(Debug, Clone)]
pub struct MatrixWorkspace {
    pub(crate) sigma: DMatrix<f64>,
    pub(crate) tmp: DMatrix<f64>,
    pub(crate) next: DMatrix<f64>,
}

impl MatrixWorkspace {
    pub fn new(n: usize) -> Self {
        Self {
            sigma: DMatrix::zeros(n, n),
            tmp: DMatrix::zeros(n, n),
            next: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn quadratic_form_examples() {
        let q = quadratic_form(&dvector![1.0, 0.0], &DMatrix::from_diagonal(&dvector![3.0, 5.0])).unwrap();
        assert_eq!(q, 3.0);
        let q = quadratic_form(&dvector![1.0, 1.0], &dmatrix![1.0, 2.0; 2.0, 1.0]).unwrap();
        assert_eq!(q, 6.0);
        let q = quadratic_form(&dvector![2.0], &dmatrix![0.9]).unwrap();
        assert!((q - 3.6).abs() < 1e-15);
    }

    #[test]
    fn quadratic_form_uses_symmetric_part() {
        let m = dmatrix![1.0, 4.0; 0.0, 1.0];
        let q = quadratic_form(&dvector![1.0, 1.0], &m).unwrap();
        assert_eq!(q, 6.0);
    }

    #[test]
    fn quadratic_form_rejects_mismatch() {
        assert!(matches!(
            quadratic_form(&dvector![1.0], &DMatrix::identity(2, 2)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn trace_product_examples() {
        let t = trace_product(&DMatrix::identity(2, 2), &DMatrix::from_diagonal(&dvector![2.0, 3.0])).unwrap();
        assert_eq!(t, 5.0);
        let t = trace_product(&dmatrix![0.0, 1.0; 0.0, 0.0], &dmatrix![0.0, 0.0; 1.0, 0.0]).unwrap();
        assert_eq!(t, 1.0);
        let t = trace_product(&dmatrix![0.5], &dmatrix![0.5]).unwrap();
        assert_eq!(t, 0.25);
    }

    #[test]
    fn trace_product_rejects_mismatch() {
        assert!(trace_product(&DMatrix::identity(2, 2), &DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn cholesky_examples() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert_eq!(cholesky_factor(&i3).unwrap(), i3);
        let l = cholesky_factor(&DMatrix::from_diagonal(&dvector![4.0, 9.0])).unwrap();
        assert_eq!(l, DMatrix::from_diagonal(&dvector![2.0, 3.0]));
        let z = DMatrix::<f64>::zeros(2, 2);
        assert_eq!(cholesky_factor(&z).unwrap(), z);
    }

    #[test]
    fn cholesky_rank_one() {
        let v = dvector![1.0, 2.0, -1.0];
        let m = &v * v.transpose();
        let l = cholesky_factor(&m).unwrap();
        assert!((&l * l.transpose() - m).norm() < 1e-12);
        assert_eq!(l[(1, 1)], 0.0);
        assert_eq!(l[(2, 2)], 0.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = dmatrix![1.0, 0.0; 0.0, -0.5];
        assert!(matches!(cholesky_factor(&m), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn min_eigenvalue_diag() {
        let m = DMatrix::from_diagonal(&dvector![3.0, -0.5, 2.0]);
        assert!((min_eigenvalue(&m) + 0.5).abs() < 1e-12);
    }
}
