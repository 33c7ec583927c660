//! Isotropic Matérn correlation and the innovation-form likelihood of
//! residual vectors.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::linalg::{chol_logdet, cholesky, gaussian_loglik_columns};
use crate::optim::{flat_directions, hessian_fd, nelder_mead_with_steps, OptimError, OptimizerConfig};
use crate::special::ln_bessel_k;

/// Search box for the Matérn parameters; outside it the objective is rejected.
pub const ALPHA_RANGE: (f64, f64) = (1e-6, 1e6);
pub const KAPPA_RANGE: (f64, f64) = (1e-2, 100.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaternError {
    #[error("correlation matrix is not positive definite (failing pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("residual matrix has {found} columns, correlation has dimension {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("need at least 2 residual vectors, got {0}")]
    TooFewResiduals(usize),
    #[error("optimizer: {0}")]
    Optimizer(#[from] OptimError),
}

/// Matérn correlation `x^kappa K_kappa(x) / (2^(kappa-1) Gamma(kappa))` at
/// `x = alpha * h`, which equals 1 at `h = 0`.
pub fn matern_correlation(h: f64, alpha: f64, kappa: f64) -> f64 {
    if h == 0.0 {
        return 1.0;
    }
    let x = alpha * h;
    let ln = kappa * x.ln() + ln_bessel_k(kappa, x)
        - (kappa - 1.0) * std::f64::consts::LN_2
        - ln_gamma(kappa);
    ln.exp().min(1.0)
}

/// A correlation matrix together with its Cholesky factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrixFactor {
    pub r: DMatrix<f64>,
    pub chol: DMatrix<f64>,
    pub logdet: f64,
}

impl CorrelationMatrixFactor {
    pub fn new(r: DMatrix<f64>) -> Result<Self, MaternError> {
        let chol = cholesky(&r).map_err(|pivot| MaternError::NotPositiveDefinite { pivot })?;
        let logdet = chol_logdet(&chol);
        Ok(Self { r, chol, logdet })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            r: DMatrix::identity(n, n),
            chol: DMatrix::identity(n, n),
            logdet: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.r.nrows()
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Pairwise distances `(i, j, d)` for `i < j`.
pub fn pairwise_distances(sites: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let s = sites.len();
    let mut out = Vec::with_capacity(s * s.saturating_sub(1) / 2);
    for i in 0..s {
        for j in (i + 1)..s {
            out.push((i, j, euclidean(&sites[i], &sites[j])));
        }
    }
    out
}

/// Matérn correlation matrix over `sites`, with `jitter` added to the
/// diagonal (0 for the model as specified). Each distinct distance is
/// evaluated once.
pub fn build_correlation(
    sites: &[Vec<f64>],
    alpha: f64,
    kappa: f64,
    jitter: f64,
) -> Result<CorrelationMatrixFactor, MaternError> {
    build_from_distances(sites.len(), &pairwise_distances(sites), alpha, kappa, jitter)
}

fn build_from_distances(
    s: usize,
    dists: &[(usize, usize, f64)],
    alpha: f64,
    kappa: f64,
    jitter: f64,
) -> Result<CorrelationMatrixFactor, MaternError> {
    let mut r = DMatrix::identity(s, s);
    let mut cache: HashMap<u64, f64> = HashMap::new();
    for &(i, j, d) in dists {
        let v = *cache
            .entry(d.to_bits())
            .or_insert_with(|| matern_correlation(d, alpha, kappa));
        r[(i, j)] = v;
        r[(j, i)] = v;
    }
    if jitter != 0.0 {
        for i in 0..s {
            r[(i, i)] += jitter;
        }
    }
    CorrelationMatrixFactor::new(r)
}

/// `sum_t log N(u_t; 0, R)` over the rows `u_t` of a `T' x S` residual matrix.
pub fn innovation_loglik(u: &DMatrix<f64>, factor: &CorrelationMatrixFactor) -> Result<f64, MaternError> {
    if u.ncols() != factor.dim() {
        return Err(MaternError::Dimension {
            expected: factor.dim(),
            found: u.ncols(),
        });
    }
    Ok(gaussian_loglik_columns(&factor.chol, factor.logdet, &u.transpose()))
}

/// Sample correlation of the columns of `u` about zero (residuals are
/// centred by construction).
pub fn sample_correlation(u: &DMatrix<f64>) -> DMatrix<f64> {
    let c = u.transpose() * u;
    let d: Vec<f64> = (0..c.nrows()).map(|i| c[(i, i)].sqrt()).collect();
    DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| {
        if i == j {
            1.0
        } else {
            c[(i, j)] / (d[i] * d[j])
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaternFit {
    pub alpha: f64,
    pub kappa: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Maximizes [`innovation_loglik`] over `(ln alpha, ln kappa)` starting from
/// `alpha = 1 / median distance`, `kappa = 1`.
pub fn fit_innovation_matern(
    u: &DMatrix<f64>,
    sites: &[Vec<f64>],
    cfg: &OptimizerConfig,
) -> Result<MaternFit, MaternError> {
    if u.nrows() < 2 {
        return Err(MaternError::TooFewResiduals(u.nrows()));
    }
    if u.ncols() != sites.len() {
        return Err(MaternError::Dimension {
            expected: sites.len(),
            found: u.ncols(),
        });
    }
    let s = sites.len();
    let dists = pairwise_distances(sites);
    let mut sorted: Vec<f64> = dists.iter().map(|d| d.2).collect();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.is_empty() {
        1.0
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let alpha0 = if median > 0.0 { 1.0 / median } else { 1.0 };
    let ut = u.transpose();

    let objective = |v: &[f64]| -> f64 {
        let (alpha, kappa) = (v[0].exp(), v[1].exp());
        if !(ALPHA_RANGE.0..=ALPHA_RANGE.1).contains(&alpha)
            || !(KAPPA_RANGE.0..=KAPPA_RANGE.1).contains(&kappa)
        {
            return f64::NEG_INFINITY;
        }
        match build_from_distances(s, &dists, alpha, kappa, 0.0) {
            Ok(f) => gaussian_loglik_columns(&f.chol, f.logdet, &ut),
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let x0 = [alpha0.ln(), 0.0];
    let res = nelder_mead_with_steps(objective, &x0, &[0.5, 0.5], cfg)?;
    let mut warnings = Vec::new();
    let hess = hessian_fd(objective, &res.x, 1e-3);
    let flat = flat_directions(&hess, 1e-4);
    if flat > 0 {
        warnings.push(format!(
            "alpha and kappa are not jointly identifiable from these data ({flat} flat direction(s) at the optimum)"
        ));
    }
    let (alpha, kappa) = (res.x[0].exp(), res.x[1].exp());
    for (name, v, (lo, hi)) in [("alpha", alpha, ALPHA_RANGE), ("kappa", kappa, KAPPA_RANGE)] {
        if v < lo * 1.01 || v > hi / 1.01 {
            warnings.push(format!("{name} estimate {v} is at the edge of the search box"));
        }
    }
    Ok(MaternFit {
        alpha,
        kappa,
        loglik: res.fval,
        iterations: res.iterations,
        evaluations: res.evaluations,
        converged: res.converged,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::LN_2PI;

    #[test]
    fn unit_at_origin() {
        for &(a, k) in &[(0.3, 1.5), (2.0, 0.2), (10.0, 7.0)] {
            assert_eq!(matern_correlation(0.0, a, k), 1.0);
            // 1 - rho(h) = O(h^(2 min(kappa, 1))) near the origin
            let h: f64 = 1e-9;
            let gap = 1.0 - matern_correlation(h, a, k);
            assert!(gap >= 0.0 && gap < 1e-13 + 10.0 * (a * h).powf(2.0 * k.min(1.0)), "{a} {k}: {gap}");
        }
    }

    #[test]
    fn three_halves_closed_form() {
        for &h in &[0.1, 1.0, 2.5, 7.0, 40.0] {
            let x: f64 = 0.3 * h;
            let expect = (1.0 + x) * (-x).exp();
            assert!((matern_correlation(h, 0.3, 1.5) - expect).abs() < 1e-13, "h={h}");
        }
    }

    #[test]
    fn exponential_case_is_log_linear() {
        let l: Vec<f64> = [1.0, 2.0, 4.0]
            .iter()
            .map(|h| matern_correlation(*h, 0.7, 0.5).ln())
            .collect();
        assert!((l[0] + 0.7).abs() < 1e-12);
        assert!(((l[2] - l[1]) / 2.0 - (l[1] - l[0])).abs() < 1e-10);
    }

    #[test]
    fn identity_loglik() {
        let u = DMatrix::zeros(3, 2);
        let ll = innovation_loglik(&u, &CorrelationMatrixFactor::identity(2)).unwrap();
        assert!((ll + 3.0 * LN_2PI).abs() < 1e-12);
        assert!(matches!(
            innovation_loglik(&DMatrix::zeros(3, 3), &CorrelationMatrixFactor::identity(2)),
            Err(MaternError::Dimension { .. })
        ));
    }

    #[test]
    fn single_site_is_trivial() {
        let f = build_correlation(&[vec![0.0]], 0.3, 1.5, 0.0).unwrap();
        assert_eq!(f.r[(0, 0)], 1.0);
        assert_eq!(f.logdet, 0.0);
    }

    #[test]
    fn coincident_sites_report_pivot() {
        let sites = vec![vec![0.0], vec![1.0], vec![1.0]];
        assert_eq!(
            build_correlation(&sites, 0.3, 1.5, 0.0),
            Err(MaternError::NotPositiveDefinite { pivot: 2 })
        );
        assert!(build_correlation(&sites, 0.3, 1.5, 1e-3).is_ok());
    }
}
