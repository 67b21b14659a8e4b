use nalgebra::DMatrix;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Off-diagonal mismatch tolerated by the symmetric routines.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Lower-triangular Cholesky factor `L` with `A = L·Lᵀ`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape {
            op: "cholesky",
            expected: (n, n),
            actual: a.shape(),
        });
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `A·Z = B` for symmetric positive-definite `A` by Cholesky factorization.
///
/// Only the lower triangle of `A` is read. A failed factorization reports the
/// index of the first non-positive pivot.
pub fn spd_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if b.rows() != n {
        return Err(Error::Shape {
            op: "spd_solve",
            expected: (n, b.cols()),
            actual: b.shape(),
        });
    }
    let l = cholesky(a)?;
    let mut z = b.clone();
    for c in 0..b.cols() {
        // forward: L·y = b
        for i in 0..n {
            let mut s = z[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * z[(k, c)];
            }
            z[(i, c)] = s / l[(i, i)];
        }
        // backward: Lᵀ·z = y
        for i in (0..n).rev() {
            let mut s = z[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * z[(k, c)];
            }
            z[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(z)
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape {
            op: "sym_eigenvalues",
            expected: (n, n),
            actual: a.shape(),
        });
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::param(
            "matrix",
            format!("not symmetric: off-diagonal mismatch {asym:e} exceeds {SYMMETRY_TOL:e}"),
        ));
    }
    let dense = DMatrix::from_row_slice(n, n, a.as_slice());
    let mut values: Vec<f64> = dense.symmetric_eigenvalues().iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("eigenvalue solver produced non-finite values".into()));
    }
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn eig_min_sym(a: &Matrix) -> Result<f64> {
    Ok(sym_eigenvalues(a)?[0])
}
