//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition number of a symmetric positive semidefinite matrix (ratio of
/// extreme eigenvalues; infinite when the smallest is not positive).
pub fn spd_condition(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 || max <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solve `m x = rhs` for symmetric positive definite `m`, rejecting
/// matrices whose condition number exceeds `max_condition`.
pub fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>, max_condition: f64) -> Result<DVector<f64>> {
    if m.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    let condition = spd_condition(m);
    if !(condition <= max_condition) {
        return Err(Error::SingularRegressors { condition });
    }
    let chol = m.clone().cholesky().ok_or(Error::SingularRegressors { condition })?;
    Ok(chol.solve(rhs))
}

/// Orthonormal basis (as columns) of the vectors orthogonal to every column
/// of `w`, i.e. the nullspace of `w^T`. Singular values of `w w^T` below
/// `rel_tol` times the largest count as zero.
pub fn nullspace_of_transpose(w: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = w.nrows();
    if w.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    let gram = w * w.transpose();
    let eig = gram.symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return DMatrix::identity(n, n);
    }
    let mut idx: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= rel_tol * max).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut out = DMatrix::zeros(n, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        out.set_column(c, &eig.eigenvectors.column(i));
    }
    out
}

/// Column means and the unbiased covariance of a sample matrix (rows are
/// observations).
pub fn sample_moments(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows();
    let m = x.ncols();
    let mean = DVector::from_iterator(m, (0..m).map(|j| x.column(j).mean()));
    let mut centered = x.clone();
    for j in 0..m {
        let mu = mean[j];
        centered.column_mut(j).apply(|v| *v -= mu);
    }
    let denom = (n.max(2) - 1) as f64;
    let cov = centered.tr_mul(&centered) / denom;
    (mean, cov)
}
