//! Thin bridges between `ndarray` storage and the dense factorizations in `nalgebra`.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{DeepcError, Result};

pub(crate) fn to_na(a: ArrayView2<f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

pub(crate) fn to_na_vec(v: ArrayView1<f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().copied())
}

pub(crate) fn from_na_vec(v: &DVector<f64>) -> Array1<f64> {
    Array1::from_iter(v.iter().copied())
}

/// Singular values in descending order.
pub fn singular_values(a: ArrayView2<f64>) -> Array1<f64> {
    let m = to_na(a);
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    Array1::from(sv)
}

/// Numerical rank with singular values above `rel_tol * sigma_max`.
pub fn rank(a: ArrayView2<f64>, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    let Some(&smax) = sv.first() else { return 0 };
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Thin SVD `a = U diag(s) V'` truncated to singular values above
/// `rel_tol * sigma_max`, sorted descending. Returns `(U, s, V)`.
pub fn thin_svd(a: ArrayView2<f64>, rel_tol: f64) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let svd = to_na(a).svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let smax = idx.first().map(|&i| svd.singular_values[i]).unwrap_or(0.0);
    idx.retain(|&i| smax > 0.0 && svd.singular_values[i] > rel_tol * smax);
    let r = idx.len();
    let (m, n) = a.dim();
    let mut uo = Array2::zeros((m, r));
    let mut vo = Array2::zeros((n, r));
    let mut so = Array1::zeros(r);
    for (k, &i) in idx.iter().enumerate() {
        so[k] = svd.singular_values[i];
        for row in 0..m {
            uo[[row, k]] = u[(row, i)];
        }
        for col in 0..n {
            vo[[col, k]] = vt[(i, col)];
        }
    }
    (uo, so, vo)
}

/// Minimum-norm least-squares solution of `a x = b` and its residual 2-norm.
pub fn lstsq(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<(Array1<f64>, f64)> {
    if a.nrows() != b.len() {
        return Err(DeepcError::dim(format!(
            "lstsq: matrix has {} rows, rhs has {}",
            a.nrows(),
            b.len()
        )));
    }
    let m = to_na(a);
    let rhs = to_na_vec(b);
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-12 * (a.nrows().max(a.ncols()) as f64);
    let x = svd
        .solve(&rhs, eps)
        .map_err(|e| DeepcError::Numeric(e.to_string()))?;
    let resid = (&m * &x - &rhs).norm();
    Ok((from_na_vec(&x), resid))
}

/// Solves a square system with partial-pivot LU.
pub fn solve_square(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(DeepcError::dim(format!(
            "solve: {}x{} system with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let lu = to_na(a).lu();
    lu.solve(&to_na_vec(b))
        .map(|x| from_na_vec(&x))
        .ok_or_else(|| DeepcError::Numeric("singular matrix".into()))
}

#[allow(dead_code)]
pub(crate) fn identity(n: usize) -> Array2<f64> {
    Array2::eye(n)
}

#[allow(dead_code)]
pub(crate) fn inf_norm(v: ArrayView1<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
