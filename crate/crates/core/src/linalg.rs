//! Small dense-matrix helpers layered over nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetrize in place as `(A + A^T) / 2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let at = a.transpose();
    *a += at;
    *a *= 0.5;
}

pub fn symmetrized(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = a.clone();
    symmetrize(&mut s);
    s
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let eig = symmetrized(a).symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Check `A` is symmetric PSD up to `tol` on the smallest eigenvalue.
pub fn check_psd(a: &DMatrix<f64>, tol: f64) -> Result<()> {
    let min_eig = min_eigenvalue(a);
    if min_eig < -tol {
        return Err(Error::NotPsd { min_eig });
    }
    Ok(())
}

/// Symmetric square root with eigenvalue clamping at zero.
pub fn sqrt_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrized(a).symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// Solve `X * A = B` for `X` with `A` symmetric positive definite,
/// i.e. `X = B A^{-1}` via a Cholesky factorization of `A`.
pub fn solve_right_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = symmetrized(a).cholesky()?;
    // X A = B  <=>  A X^T = B^T (A symmetric).
    Some(chol.solve(&b.transpose()).transpose())
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    a.clone().complex_eigenvalues().iter().cloned().collect()
}

/// Numerical rank from singular values with a relative threshold.
pub fn rank_with_tol(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let svd = a.clone().svd(false, false);
    let smax = svd
        .singular_values
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > rel_tol * smax)
        .count()
}

/// Numerical rank of a complex matrix (used by the Hautus tests, where the
/// pencil is evaluated at complex eigenvalues).
pub fn rank_complex(a: &DMatrix<Complex<f64>>, rel_tol: f64) -> usize {
    let svd = a.clone().svd(false, false);
    let smax = svd
        .singular_values
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > rel_tol * smax)
        .count()
}

/// Frobenius norm of `A - B`.
pub fn frob_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

/// Lift a real matrix into a complex one.
pub fn to_complex(a: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    a.map(|x| Complex::new(x, 0.0))
}

/// Stack two matrices vertically.
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(top.ncols(), bottom.ncols());
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), (top.nrows(), top.ncols())).copy_from(top);
    out.view_mut((top.nrows(), 0), (bottom.nrows(), bottom.ncols()))
        .copy_from(bottom);
    out
}

/// Stack two matrices horizontally.
pub fn hstack(left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(left.nrows(), right.nrows());
    let mut out = DMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.view_mut((0, 0), (left.nrows(), left.ncols())).copy_from(left);
    out.view_mut((0, left.ncols()), (right.nrows(), right.ncols()))
        .copy_from(right);
    out
}

/// Weighted mean and covariance of a set of column vectors.
pub fn weighted_moments(states: &[DVector<f64>], weights: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let dim = states[0].len();
    let mut mean = DVector::zeros(dim);
    for (u, &w) in states.iter().zip(weights) {
        mean.axpy(w, u, 1.0);
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for (u, &w) in states.iter().zip(weights) {
        let d = u - &mean;
        cov.syger(w, &d, &d, 1.0);
    }
    crate::linalg::symmetrize(&mut cov);
    (mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_of_diag() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let s = sqrt_psd(&a);
        assert!((s[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((s[(1, 1)] - 3.0).abs() < 1e-12);
        assert!(s[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn sqrt_clamps_negative_eigenvalues() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1e-14]));
        let s = sqrt_psd(&a);
        assert_eq!(s[(1, 1)], 0.0);
    }

    #[test]
    fn right_solve_spd() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = DMatrix::from_row_slice(1, 2, &[1.0, 3.0]);
        let x = solve_right_spd(&a, &b).unwrap();
        assert!(frob_diff(&(&x * &a), &b) < 1e-12);
    }

    #[test]
    fn rank_detects_deficiency() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(rank_with_tol(&a, 1e-10), 1);
        let b = DMatrix::<f64>::identity(3, 3);
        assert_eq!(rank_with_tol(&b, 1e-10), 3);
    }

    #[test]
    fn complex_eigenvalues_of_rotation() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let mut eigs = eigenvalues(&a);
        eigs.sort_by(|x, y| x.im.partial_cmp(&y.im).unwrap());
        assert!((eigs[0].im + 1.0).abs() < 1e-12);
        assert!((eigs[1].im - 1.0).abs() < 1e-12);
    }
}
