//! Brute-force reference computations for the test suites.
//!
//! Everything here works on dense matrices with textbook formulas and shares
//! no code with the library under test. Sizes are meant to stay small.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log N(x; mean, cov)` by explicit Cholesky.
pub fn mvn_logpdf(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> f64 {
    let n = x.len();
    let chol = cov
        .clone()
        .cholesky()
        .expect("oracle covariance is not positive definite");
    let d = DVector::from_iterator(n, x.iter().zip(mean).map(|(a, b)| a - b));
    let z = chol.l().solve_lower_triangular(&d).unwrap();
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (n as f64 * LN_2PI + logdet + z.dot(&z))
}

/// `log N(x; 0, cov)` through an explicit inverse and determinant.
pub fn mvn_logpdf_inverse(x: &[f64], cov: &DMatrix<f64>) -> f64 {
    let n = x.len();
    let inv = cov.clone().try_inverse().expect("singular covariance");
    let v = DVector::from_column_slice(x);
    let q = (v.transpose() * inv * &v)[(0, 0)];
    -0.5 * (n as f64 * LN_2PI + cov.determinant().ln() + q)
}

/// Log-determinant as the sum of log-eigenvalues of a symmetric matrix.
pub fn logdet_eigen(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|v| v.ln())
        .sum()
}

/// Moving-average weights of `phi(B) X = theta(B) Z`, truncated at `n` terms.
pub fn psi(phi: &[f64], theta: &[f64], n: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = match j {
            0 => 1.0,
            _ if j <= theta.len() => theta[j - 1],
            _ => 0.0,
        };
        for (i, a) in phi.iter().enumerate() {
            if j > i {
                v += a * w[j - i - 1];
            }
        }
        w.push(v);
    }
    w
}

/// Number of weights needed before `|psi_j|` stays below `1e-17`.
fn psi_len(phi: &[f64], theta: &[f64], extra: usize) -> usize {
    let mut n = 256 + extra;
    loop {
        let w = psi(phi, theta, n);
        let tail = w[n - 64..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if tail < 1e-17 || n > 4_000_000 {
            return n;
        }
        n *= 2;
    }
}

/// Cross-covariance `Cov(X_{a,t}, X_{b,t+h})` of two ARMA filters driven by
/// innovations with correlation `rho` and scales `sa`, `sb`.
pub fn cross_covariance(
    a: (&[f64], &[f64], f64),
    b: (&[f64], &[f64], f64),
    rho: f64,
    max_lag: usize,
) -> Vec<f64> {
    let n = psi_len(a.0, a.1, max_lag).max(psi_len(b.0, b.1, max_lag));
    let pa = psi(a.0, a.1, n);
    let pb = psi(b.0, b.1, n + max_lag);
    (0..=max_lag)
        .map(|h| a.2 * b.2 * rho * (0..n).map(|i| pa[i] * pb[i + h]).sum::<f64>())
        .collect()
}

/// Dense `T x T` Toeplitz covariance of a univariate ARMA.
pub fn arma_covariance(phi: &[f64], theta: &[f64], sigma: f64, t: usize) -> DMatrix<f64> {
    let g = cross_covariance((phi, theta, sigma), (phi, theta, sigma), 1.0, t);
    DMatrix::from_fn(t, t, |i, j| g[i.abs_diff(j)])
}

/// Exact ARMA log-likelihood of `y` with mean `mu + beta1 * t`, `t = 1..=T`.
pub fn arma_loglik(y: &[f64], mu: f64, beta1: f64, sigma: f64, phi: &[f64], theta: &[f64]) -> f64 {
    let cov = arma_covariance(phi, theta, sigma, y.len());
    let mean: Vec<f64> = (1..=y.len()).map(|t| mu + beta1 * t as f64).collect();
    mvn_logpdf(y, &mean, &cov)
}

/// One site of a diagonal VARMA for [`joint_covariance`].
pub struct SiteArma<'a> {
    pub mu: f64,
    pub sigma: f64,
    pub phi: &'a [f64],
    pub theta: &'a [f64],
}

/// Covariance of `vec(Y)` with time-major stacking (`index = t * S + s`) for
/// a diagonal VARMA whose innovations have correlation `r`.
pub fn joint_covariance(sites: &[SiteArma<'_>], r: &DMatrix<f64>, t: usize) -> DMatrix<f64> {
    let s = sites.len();
    let mut blocks = vec![vec![Vec::new(); s]; s];
    for a in 0..s {
        for b in 0..s {
            blocks[a][b] = cross_covariance(
                (sites[a].phi, sites[a].theta, sites[a].sigma),
                (sites[b].phi, sites[b].theta, sites[b].sigma),
                r[(a, b)],
                t,
            );
        }
    }
    DMatrix::from_fn(t * s, t * s, |i, j| {
        let (ti, si) = (i / s, i % s);
        let (tj, sj) = (j / s, j % s);
        if tj >= ti {
            blocks[si][sj][tj - ti]
        } else {
            blocks[sj][si][ti - tj]
        }
    })
}

/// `log p(y_{k+1..T} | y_{1..k})` for the diagonal VARMA from the joint
/// Gaussian. `y[t][s]` is the value at time `t` (0-based) and site `s`.
pub fn joint_conditional_loglik(
    y: &[Vec<f64>],
    sites: &[SiteArma<'_>],
    r: &DMatrix<f64>,
    k: usize,
) -> f64 {
    let t = y.len();
    let s = sites.len();
    let flat: Vec<f64> = y.iter().flatten().copied().collect();
    let mean: Vec<f64> = (0..t * s).map(|i| sites[i % s].mu).collect();
    let cov = joint_covariance(sites, r, t);
    let full = mvn_logpdf(&flat, &mean, &cov);
    if k == 0 {
        return full;
    }
    let m = k * s;
    let head = cov.view((0, 0), (m, m)).into_owned();
    full - mvn_logpdf(&flat[..m], &mean[..m], &head)
}

/// Real circulant covariance whose unitary-DFT eigenvalues are `f`
/// (`f[c] == f[N - c]` is assumed), built by a naive cosine sum.
pub fn circulant_covariance(f: &[f64]) -> DMatrix<f64> {
    let n = f.len();
    let first: Vec<f64> = (0..n)
        .map(|d| {
            f.iter()
                .enumerate()
                .map(|(c, v)| v * (2.0 * PI * (c * d) as f64 / n as f64).cos())
                .sum::<f64>()
                / n as f64
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| first[(i + n - j) % n])
}

/// Block-circulant covariance for `M` rings of `N` points, site index
/// `m * N + j`. `cross[m1][m2]` is the cross-spectral mass between rings.
pub fn block_circulant_covariance(cross: &[Vec<Vec<f64>>]) -> DMatrix<f64> {
    let m = cross.len();
    let n = cross[0][0].len();
    let mut out = DMatrix::zeros(n * m, n * m);
    for a in 0..m {
        for b in 0..m {
            let blk = circulant_covariance(&cross[a][b]);
            out.view_mut((a * n, b * n), (n, n)).copy_from(&blk);
        }
    }
    out
}

/// Two-sample Kolmogorov-Smirnov test; returns `(D, asymptotic p-value)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    if lambda < 0.2 {
        return (d, 1.0);
    }
    let mut p = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = 2.0 * (-1.0f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar1_covariance_closed_form() {
        let c = arma_covariance(&[0.6], &[], 1.0, 4);
        let g0 = 1.0 / (1.0 - 0.36);
        assert!((c[(0, 0)] - g0).abs() < 1e-12);
        assert!((c[(0, 3)] - g0 * 0.6f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn two_logpdf_routes_agree() {
        let c = arma_covariance(&[0.5, 0.25], &[0.3], 1.2, 6);
        let x = [0.3, -1.0, 0.2, 0.9, 1.4, -0.5];
        assert!((mvn_logpdf(&x, &[0.0; 6], &c) - mvn_logpdf_inverse(&x, &c)).abs() < 1e-10);
    }

    #[test]
    fn white_circulant_is_identity() {
        let c = circulant_covariance(&[1.0; 5]);
        assert!((c - DMatrix::identity(5, 5)).abs().max() < 1e-14);
    }

    #[test]
    fn ks_identical_samples() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert!(p > 0.99);
    }
}
