//! Small dense kernels: Cholesky with pivot reporting, triangular solves and
//! Gaussian log-densities through the factor.

use nalgebra::DMatrix;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Lower Cholesky factor of a symmetric positive-definite matrix.
///
/// Only the lower triangle of `a` is read. On failure returns the index of
/// the first non-positive pivot.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>, usize> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(j);
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

pub fn chol_logdet(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Solves `L x = b` in place for every column of `b`.
pub fn solve_lower_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    for c in 0..b.ncols() {
        for i in 0..n {
            let mut s = b[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * b[(k, c)];
            }
            b[(i, c)] = s / l[(i, i)];
        }
    }
}

/// `sum_t log N(x_t; 0, L L^T)` where the columns of `xt` are the vectors `x_t`.
pub fn gaussian_loglik_columns(l: &DMatrix<f64>, logdet: f64, xt: &DMatrix<f64>) -> f64 {
    let mut z = xt.clone();
    solve_lower_in_place(l, &mut z);
    let n = xt.nrows() as f64;
    let count = xt.ncols() as f64;
    -0.5 * count * (n * LN_2PI + logdet) - 0.5 * z.iter().map(|v| v * v).sum::<f64>()
}
