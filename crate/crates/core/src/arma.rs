//! Univariate Gaussian ARMA(p, q): autocovariances, exact likelihood,
//! conditional residuals and maximum likelihood fitting.
//!
//! The exact likelihood uses the innovations algorithm on the transformed
//! process `W_t = X_t / sigma` for `t <= m`, `W_t = phi(B) X_t / sigma` for
//! `t > m` (`m = max(p, q)`), whose covariance is banded beyond `m`. The cost
//! is `O(T q^2 + m^3)` per evaluation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::LN_2PI;
use crate::model::{is_stationary, ArmaSpec};
use crate::optim::{nelder_mead_with_steps, OptimError, OptimizerConfig};

/// Smallest admissible innovation scale during fitting.
pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArmaError {
    #[error("AR polynomial is not stationary")]
    NonStationary,
    #[error("series of length {len} is too short for ARMA({p},{q}) (need more than {need})")]
    TooShort {
        len: usize,
        p: usize,
        q: usize,
        need: usize,
    },
    #[error("sigma must be positive")]
    NonPositiveScale,
    #[error("singular autocovariance system")]
    Singular,
    #[error("optimizer: {0}")]
    Optimizer(#[from] OptimError),
}

/// Infinite moving-average weights `psi_0..psi_{n-1}` of
/// `phi(B) X_t = theta(B) Z_t`.
pub fn psi_weights(phi: &[f64], theta: &[f64], n: usize) -> Vec<f64> {
    let mut psi = vec![0.0; n];
    for j in 0..n {
        let mut v = if j == 0 {
            1.0
        } else if j <= theta.len() {
            theta[j - 1]
        } else {
            0.0
        };
        for i in 1..=phi.len().min(j) {
            v += phi[i - 1] * psi[j - i];
        }
        psi[j] = v;
    }
    psi
}

fn exact_acov(phi: &[f64], theta: &[f64], sigma2: f64, max_lag: usize) -> Result<Vec<f64>, ArmaError> {
    let p = phi.len();
    let q = theta.len();
    let psi = psi_weights(phi, theta, q + 1);
    let th = |r: usize| if r == 0 { 1.0 } else { theta[r - 1] };
    // sigma^2 * sum_{j=k}^{q} theta_j psi_{j-k}
    let rhs = |k: usize| -> f64 {
        if k > q {
            0.0
        } else {
            sigma2 * (k..=q).map(|j| th(j) * psi[j - k]).sum::<f64>()
        }
    };

    let n = p + 1;
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
    let mut b = nalgebra::DVector::<f64>::zeros(n);
    for k in 0..n {
        a[(k, k)] += 1.0;
        for i in 1..=p {
            a[(k, k.abs_diff(i))] -= phi[i - 1];
        }
        b[k] = rhs(k);
    }
    let head = a.lu().solve(&b).ok_or(ArmaError::Singular)?;

    let len = max_lag.max(p) + 1;
    let mut g = vec![0.0; len];
    g[..n].copy_from_slice(head.as_slice());
    for k in n..len {
        g[k] = (1..=p).map(|i| phi[i - 1] * g[k - i]).sum::<f64>() + rhs(k);
    }
    g.truncate(max_lag + 1);
    Ok(g)
}

/// Autocovariances `gamma(0..=max_lag)` from the exact linear system
/// relating `gamma(0..p)` to the moving-average weights.
pub fn arma_autocovariance(spec: &ArmaSpec, max_lag: usize) -> Result<Vec<f64>, ArmaError> {
    if !spec.is_stationary() {
        return Err(ArmaError::NonStationary);
    }
    exact_acov(&spec.phi, &spec.pi_ma, spec.sigma * spec.sigma, max_lag)
}

/// Autocovariances by summing `sigma^2 sum_i psi_{i+h} psi_i`, truncated once
/// the remaining weights are negligible.
pub fn autocovariance_ma_expansion(spec: &ArmaSpec, max_lag: usize) -> Result<Vec<f64>, ArmaError> {
    if !spec.is_stationary() {
        return Err(ArmaError::NonStationary);
    }
    const CAP: usize = 10_000_000;
    let (phi, theta) = (&spec.phi, &spec.pi_ma);
    let window = phi.len().max(1);
    let mut psi: Vec<f64> = Vec::new();
    let mut energy = 0.0;
    let mut j = 0usize;
    loop {
        let mut v = if j == 0 {
            1.0
        } else if j <= theta.len() {
            theta[j - 1]
        } else {
            0.0
        };
        for i in 1..=phi.len().min(j) {
            v += phi[i - 1] * psi[j - i];
        }
        psi.push(v);
        energy += v * v;
        j += 1;
        if j > theta.len() + phi.len() + max_lag + 1 {
            let tail_small = psi[psi.len() - window..]
                .iter()
                .all(|w| w * w < 1e-24 * energy);
            if tail_small || j >= CAP {
                break;
            }
        }
    }
    let s2 = spec.sigma * spec.sigma;
    Ok((0..=max_lag)
        .map(|h| {
            s2 * psi
                .iter()
                .zip(psi.iter().skip(h))
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .collect())
}

fn detrend(series: &[f64], spec: &ArmaSpec) -> Vec<f64> {
    series
        .iter()
        .enumerate()
        .map(|(i, y)| y - spec.mean_at((i + 1) as f64))
        .collect()
}

/// Exact Gaussian log-likelihood of `series` (trend evaluated at `t = 1..=T`).
///
/// A non-stationary AR polynomial or non-positive `sigma` yields
/// `Ok(f64::NEG_INFINITY)`; a series that is too short is an error.
pub fn arma_loglik(series: &[f64], spec: &ArmaSpec) -> Result<f64, ArmaError> {
    let (p, q) = (spec.phi.len(), spec.pi_ma.len());
    if series.len() <= p + q {
        return Err(ArmaError::TooShort {
            len: series.len(),
            p,
            q,
            need: p + q,
        });
    }
    if !(spec.sigma > 0.0) || !spec.is_stationary() {
        return Ok(f64::NEG_INFINITY);
    }
    let x = detrend(series, spec);
    innovations_loglik(&x, &spec.phi, &spec.pi_ma, spec.sigma)
}

fn innovations_loglik(x: &[f64], phi: &[f64], theta: &[f64], sigma: f64) -> Result<f64, ArmaError> {
    let n = x.len();
    let p = phi.len();
    let q = theta.len();
    let m = p.max(q);
    let acov = exact_acov(phi, theta, 1.0, m)?;
    let th = |r: usize| if r == 0 { 1.0 } else { theta[r - 1] };

    // Covariance of the transformed process, 1-based indices.
    let kappa = |i: usize, j: usize| -> f64 {
        let (lo, hi) = (i.min(j), i.max(j));
        let h = hi - lo;
        if hi <= m {
            acov[h]
        } else if h > q {
            0.0
        } else if lo <= m {
            acov[h] - (1..=p).map(|r| phi[r - 1] * acov[r.abs_diff(h)]).sum::<f64>()
        } else {
            (0..=(q - h)).map(|r| th(r) * th(r + h)).sum()
        }
    };

    let mut v: Vec<f64> = Vec::with_capacity(n);
    // rows[k][j - 1] = theta_{k, j}
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    rows.push(Vec::new());
    v.push(kappa(1, 1));
    for nn in 1..n {
        let len = if nn < m { nn } else { q.min(nn) };
        let kmin = nn - len;
        let mut row = vec![0.0; len];
        for k in kmin..nn {
            let mut s = kappa(nn + 1, k + 1);
            let jmin = kmin.max(k - rows[k].len());
            for j in jmin..k {
                s -= rows[k][k - j - 1] * row[nn - j - 1] * v[j];
            }
            row[nn - k - 1] = s / v[k];
        }
        let mut vn = kappa(nn + 1, nn + 1);
        for j in kmin..nn {
            let t = row[nn - j - 1];
            vn -= t * t * v[j];
        }
        rows.push(row);
        v.push(vn);
    }

    let s2 = sigma * sigma;
    let mut xhat = vec![0.0; n];
    let mut ll = 0.0;
    for t in 0..n {
        if t > 0 {
            let row = &rows[t];
            let mut pred = 0.0;
            if t >= m {
                for i in 1..=p {
                    pred += phi[i - 1] * x[t - i];
                }
            }
            for j in 1..=row.len() {
                pred += row[j - 1] * (x[t - j] - xhat[t - j]);
            }
            xhat[t] = pred;
        }
        let var = s2 * v[t];
        if !(var > 0.0) {
            return Err(ArmaError::Singular);
        }
        let e = x[t] - xhat[t];
        ll -= 0.5 * (LN_2PI + var.ln() + e * e / var);
    }
    Ok(ll)
}

/// Standardized conditional residuals `u_t`, `t = p+1..=T`, with pre-sample
/// innovations set to zero.
pub fn arma_residuals(series: &[f64], spec: &ArmaSpec) -> Result<Vec<f64>, ArmaError> {
    let (p, q) = (spec.phi.len(), spec.pi_ma.len());
    if series.len() <= p + q {
        return Err(ArmaError::TooShort {
            len: series.len(),
            p,
            q,
            need: p + q,
        });
    }
    if !spec.is_stationary() {
        return Err(ArmaError::NonStationary);
    }
    if !(spec.sigma > 0.0) {
        return Err(ArmaError::NonPositiveScale);
    }
    let x = detrend(series, spec);
    let mut u = vec![0.0; x.len() - p];
    for t in p..x.len() {
        let mut e = x[t];
        for i in 1..=p {
            e -= spec.phi[i - 1] * x[t - i];
        }
        let k = t - p;
        for j in 1..=q.min(k) {
            e -= spec.pi_ma[j - 1] * spec.sigma * u[k - j];
        }
        u[k] = e / spec.sigma;
    }
    Ok(u)
}

/// Biased sample autocovariances `c(0..=max_lag)` of a mean-zero series.
pub fn sample_autocovariance(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..=max_lag)
        .map(|h| {
            if h >= x.len() {
                0.0
            } else {
                x.iter().zip(&x[h..]).map(|(a, b)| a * b).sum::<f64>() / n
            }
        })
        .collect()
}

/// Durbin-Levinson: AR(p) coefficients and innovation variance from
/// autocovariances `c(0..=p)`.
pub fn durbin_levinson(c: &[f64]) -> (Vec<f64>, f64) {
    let p = c.len().saturating_sub(1);
    let mut phi: Vec<f64> = Vec::with_capacity(p);
    let mut v = c[0];
    for k in 1..=p {
        if !(v > 0.0) {
            phi.resize(p, 0.0);
            break;
        }
        let acc: f64 = (1..k).map(|j| phi[j - 1] * c[k - j]).sum();
        let r = (c[k] - acc) / v;
        let prev = phi.clone();
        for j in 1..k {
            phi[j - 1] = prev[j - 1] - r * prev[k - j - 1];
        }
        phi.push(r);
        v *= 1.0 - r * r;
    }
    (phi, v)
}

/// Ljung-Box portmanteau statistic over lags `1..=lags`.
pub fn ljung_box(residuals: &[f64], lags: usize) -> f64 {
    let n = residuals.len();
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = residuals.iter().map(|v| v - mean).collect();
    let c = sample_autocovariance(&x, lags);
    let nf = n as f64;
    nf * (nf + 2.0)
        * (1..=lags)
            .map(|k| (c[k] / c[0]).powi(2) / (nf - k as f64))
            .sum::<f64>()
}

/// Mean structure for a univariate fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanTerm {
    /// Known mean `mu + beta1 * t`; not estimated.
    Fixed { mu: f64, beta1: f64 },
    /// Estimated constant mean, no trend.
    Constant,
    /// Estimated intercept and linear trend.
    Trend,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmaFitOptions {
    pub p: usize,
    pub q: usize,
    pub mean: MeanTerm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaFit {
    pub site: usize,
    pub spec: ArmaSpec,
    pub loglik: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// The scale estimate collapsed onto [`SIGMA_FLOOR`] (degenerate series).
    pub sigma_at_floor: bool,
}

impl ArmaFit {
    /// Number of estimated parameters.
    pub fn n_params(&self, mean: MeanTerm) -> usize {
        let m = match mean {
            MeanTerm::Fixed { .. } => 0,
            MeanTerm::Constant => 1,
            MeanTerm::Trend => 2,
        };
        m + 1 + self.spec.p + self.spec.q
    }

    pub fn aic(&self, mean: MeanTerm) -> f64 {
        -2.0 * self.loglik + 2.0 * self.n_params(mean) as f64
    }
}

/// Minimum series length accepted by [`fit_arma`].
pub fn min_fit_length(p: usize, q: usize) -> usize {
    3 * (p + q) + 6
}

fn ols_trend(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let tbar = (n + 1.0) / 2.0;
    let ybar = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dt = (i + 1) as f64 - tbar;
        sxy += dt * (v - ybar);
        sxx += dt * dt;
    }
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (ybar - b * tbar, b)
}

/// Maximum likelihood fit of an ARMA(p, q) by Nelder-Mead from a
/// method-of-moments start (sample mean or OLS trend, Yule-Walker AR
/// coefficients and innovation scale, zero MA coefficients).
pub fn fit_arma(
    series: &[f64],
    opts: &ArmaFitOptions,
    cfg: &OptimizerConfig,
) -> Result<ArmaFit, ArmaError> {
    let (p, q) = (opts.p, opts.q);
    let n = series.len();
    if n < min_fit_length(p, q) {
        return Err(ArmaError::TooShort {
            len: n,
            p,
            q,
            need: min_fit_length(p, q) - 1,
        });
    }

    let (mu0, beta0) = match opts.mean {
        MeanTerm::Fixed { mu, beta1 } => (mu, beta1),
        MeanTerm::Constant => (series.iter().sum::<f64>() / n as f64, 0.0),
        MeanTerm::Trend => ols_trend(series),
    };
    let x: Vec<f64> = series
        .iter()
        .enumerate()
        .map(|(i, y)| y - mu0 - beta0 * (i + 1) as f64)
        .collect();
    let c = sample_autocovariance(&x, p);
    let sd = c[0].sqrt();
    let (phi0, v0) = if c[0] > 0.0 {
        durbin_levinson(&c)
    } else {
        (vec![0.0; p], 0.0)
    };
    let phi0 = if is_stationary(&phi0) { phi0 } else { vec![0.0; p] };
    let sigma0 = v0.sqrt().max(1e-4);
    let scale = if sd > 0.0 { sd } else { 1.0 };

    let mut x0 = Vec::with_capacity(p + q + 3);
    let mut steps = Vec::with_capacity(p + q + 3);
    let h = cfg.init_step;
    match opts.mean {
        MeanTerm::Fixed { .. } => {}
        MeanTerm::Constant => {
            x0.push(mu0);
            steps.push(h * scale);
        }
        MeanTerm::Trend => {
            x0.push(mu0);
            steps.push(h * scale);
            x0.push(beta0);
            steps.push(h * scale / n as f64);
        }
    }
    let mean_len = x0.len();
    x0.push(sigma0);
    steps.push(h * sigma0);
    x0.extend_from_slice(&phi0);
    steps.extend(std::iter::repeat_n(h, p));
    x0.extend(std::iter::repeat_n(0.0, q));
    steps.extend(std::iter::repeat_n(h, q));

    let unpack = |v: &[f64]| -> ArmaSpec {
        let (mu, beta1) = match opts.mean {
            MeanTerm::Fixed { mu, beta1 } => (mu, beta1),
            MeanTerm::Constant => (v[0], 0.0),
            MeanTerm::Trend => (v[0], v[1]),
        };
        let sigma = v[mean_len];
        let phi = v[mean_len + 1..mean_len + 1 + p].to_vec();
        let pi_ma = v[mean_len + 1 + p..].to_vec();
        ArmaSpec::new(mu, beta1, sigma, phi, pi_ma)
    };

    let objective = |v: &[f64]| -> f64 {
        let spec = unpack(v);
        if spec.sigma < SIGMA_FLOOR || !spec.is_invertible() {
            return f64::NEG_INFINITY;
        }
        arma_loglik(series, &spec).unwrap_or(f64::NEG_INFINITY)
    };

    let res = nelder_mead_with_steps(objective, &x0, &steps, cfg)?;
    let spec = unpack(&res.x);
    Ok(ArmaFit {
        site: 0,
        sigma_at_floor: spec.sigma < 100.0 * SIGMA_FLOOR,
        spec,
        loglik: res.fval,
        iterations: res.iterations,
        evaluations: res.evaluations,
        converged: res.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSelection {
    pub best: ArmaFit,
    /// `(p, q, aic)` for every order that could be fitted.
    pub table: Vec<(usize, usize, f64)>,
}

/// Fits every order on the grid `0..=max_p` x `0..=max_q` and keeps the one
/// with the lowest AIC.
pub fn select_arma_order(
    series: &[f64],
    max_p: usize,
    max_q: usize,
    mean: MeanTerm,
    cfg: &OptimizerConfig,
) -> Result<OrderSelection, ArmaError> {
    let mut best: Option<(f64, ArmaFit)> = None;
    let mut table = Vec::new();
    let mut last_err = None;
    for p in 0..=max_p {
        for q in 0..=max_q {
            match fit_arma(series, &ArmaFitOptions { p, q, mean }, cfg) {
                Ok(fit) => {
                    let aic = fit.aic(mean);
                    table.push((p, q, aic));
                    if best.as_ref().is_none_or(|(b, _)| aic < *b) {
                        best = Some((aic, fit));
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
    }
    match best {
        Some((_, best)) => Ok(OrderSelection { best, table }),
        None => Err(last_err.unwrap_or(ArmaError::Singular)),
    }
}
