//! Dense linear-algebra helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Diagonal jitter ladder tried by [`cholesky_with_jitter`] after a plain
/// factorization fails.
const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Replaces `a` by `(a + aᵀ) / 2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let n = a.nrows();
    (0..n).all(|i| ((i + 1)..n).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= tol))
}

/// Cholesky factorization, retrying with an escalating diagonal jitter
/// (1e-10 up to 1e-6) before giving up.
pub fn cholesky_with_jitter(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(ch) = Cholesky::new(a.clone()) {
        return Ok(ch);
    }
    for &eps in &JITTER_LADDER {
        let mut shifted = a.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += eps;
        }
        if let Some(ch) = Cholesky::new(shifted) {
            log::debug!("cholesky needed diagonal jitter {eps:e}");
            return Ok(ch);
        }
    }
    Err(Error::singular(format!(
        "cholesky failed on {}x{} matrix even with jitter {:e}",
        a.nrows(),
        a.ncols(),
        JITTER_LADDER[JITTER_LADDER.len() - 1]
    )))
}

/// Symmetric eigendecomposition of a (symmetrized copy of) `a`.
pub fn sym_eigen(a: &DMatrix<f64>) -> SymmetricEigen<f64, Dyn> {
    let mut s = a.clone();
    symmetrize(&mut s);
    SymmetricEigen::new(s)
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigen(a).eigenvalues.min()
}

/// `V diag(f(λ)) Vᵀ` for a symmetric eigendecomposition.
pub fn spectral_map(eig: &SymmetricEigen<f64, Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let fk = f(lam);
        scaled.column_mut(k).scale_mut(fk);
    }
    let mut out = &scaled * v.transpose();
    symmetrize(&mut out);
    out
}

/// Symmetric inverse square root `A^{-1/2}`.
///
/// Eigenvalues in `[floor / 2, floor)` are lifted to `floor` (roundoff left
/// over from a floor-clipped repair); anything smaller is an error.
pub fn inv_sqrt_psd(a: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(a);
    let min = eig.eigenvalues.min();
    if !(min >= 0.5 * floor) {
        return Err(Error::singular(format!("eigenvalue {min:e} below floor {floor:e}")));
    }
    Ok(spectral_map(&eig, |lam| 1.0 / lam.max(floor).sqrt()))
}

/// Column means of `x`.
pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Subtracts column means in place and returns them.
pub fn center_columns(x: &mut DMatrix<f64>) -> DVector<f64> {
    let means = column_means(x);
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    means
}

/// Covariance of the columns of `x` with divisor `n - ddof`.
pub fn covariance(x: &DMatrix<f64>, ddof: usize) -> DMatrix<f64> {
    let mut c = x.clone();
    center_columns(&mut c);
    let denom = (x.nrows() - ddof) as f64;
    let mut s = c.tr_mul(&c) / denom;
    symmetrize(&mut s);
    s
}

/// Gram matrix `xᵀx / n`.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = x.tr_mul(x) / x.nrows() as f64;
    symmetrize(&mut g);
    g
}

pub fn frobenius_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}
