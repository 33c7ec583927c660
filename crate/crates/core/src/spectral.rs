//! Axially symmetric innovations on a longitude-latitude grid.
//!
//! Each latitude ring of `N` points is stationary in longitude with a
//! modified Matérn spectral mass; rings are linked through a real coherence
//! that decays with latitude separation. The covariance of the full grid is
//! block circulant, so after a unitary DFT along longitude the wavenumbers
//! decouple into independent `M x M` problems.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{chol_logdet, cholesky, solve_lower_in_place, LN_2PI};
use crate::optim::{flat_directions, hessian_fd, nelder_mead_with_steps, OptimError, OptimizerConfig};

pub const ALPHA_RANGE: (f64, f64) = (1e-4, 1e3);
pub const KAPPA_RANGE: (f64, f64) = (1e-3, 50.0);
pub const TAU_MAX: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("spectral mass is zero or non-finite at wavenumber {c}")]
    ZeroMass { c: usize },
    #[error("length mismatch: expected {expected}, found {found}")]
    Length { expected: usize, found: usize },
    #[error("cross-spectral matrix is not positive definite at wavenumber {c}")]
    NotPositiveDefinite { c: usize },
    #[error("ring length must be at least 2")]
    RingTooShort,
    #[error("no residual vectors")]
    NoData,
    #[error("optimizer: {0}")]
    Optimizer(#[from] OptimError),
}

/// `4 sin^2(pi c / N)`, exactly symmetric under `c -> N - c`.
#[inline]
pub fn four_sin2(c: usize, n: usize) -> f64 {
    let c = c.min(n - c);
    let s = (PI * c as f64 / n as f64).sin();
    4.0 * s * s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMass {
    /// Masses at wavenumbers `0..N`, normalized so that their mean is 1.
    pub f: Vec<f64>,
}

impl SpectralMass {
    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }
}

/// `f(c) ∝ (alpha^2 + 4 sin^2(pi c / N))^-(kappa + 1/2)`, normalized to mean 1.
/// Evaluated in log space so extreme parameters do not overflow.
pub fn modified_matern_mass(alpha: f64, kappa: f64, n: usize) -> SpectralMass {
    let a2 = alpha * alpha;
    let logs: Vec<f64> = (0..n)
        .map(|c| -(kappa + 0.5) * (a2 + four_sin2(c, n)).ln())
        .collect();
    let top = logs.iter().fold(f64::NEG_INFINITY, |a, v| a.max(*v));
    let lse = top + logs.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
    let shift = (n as f64).ln() - lse;
    SpectralMass {
        f: logs.iter().map(|v| (v + shift).exp()).collect(),
    }
}

/// Unitary DFT along a ring of fixed length.
#[derive(Clone)]
pub struct RingDft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RingDft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RingDft").field("n", &self.n).finish()
    }
}

impl RingDft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `u~(c) = N^-1/2 sum_j u_j exp(-2 pi i c j / N)`.
    pub fn forward(&self, ring: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = ring.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.forward.process(&mut buf);
        let s = 1.0 / (self.n as f64).sqrt();
        buf.iter_mut().for_each(|v| *v *= s);
        buf
    }

    /// Inverse of [`RingDft::forward`]; returns the real part.
    pub fn inverse_real(&self, spec: &[Complex64]) -> Vec<f64> {
        let mut buf = spec.to_vec();
        self.inverse.process(&mut buf);
        let s = 1.0 / (self.n as f64).sqrt();
        buf.iter().map(|v| v.re * s).collect()
    }

    pub fn periodogram(&self, ring: &[f64]) -> Vec<f64> {
        self.forward(ring).iter().map(|v| v.norm_sqr()).collect()
    }
}

/// Whittle log-likelihood of a summed periodogram `psum` over `count` rings.
pub fn whittle_from_periodogram(psum: &[f64], count: usize, mass: &SpectralMass) -> Result<f64, SpectralError> {
    if psum.len() != mass.len() {
        return Err(SpectralError::Length {
            expected: mass.len(),
            found: psum.len(),
        });
    }
    let n = mass.len() as f64;
    let k = count as f64;
    let mut acc = 0.0;
    for (c, (p, f)) in psum.iter().zip(&mass.f).enumerate() {
        if !(*f > 0.0 && f.is_finite()) {
            return Err(SpectralError::ZeroMass { c });
        }
        acc += k * f.ln() + p / f;
    }
    Ok(-0.5 * k * n * LN_2PI - 0.5 * acc)
}

/// Gaussian log-density of one ring under the circulant covariance with
/// eigenvalues `mass`.
pub fn whittle_loglik(ring: &[f64], mass: &SpectralMass) -> Result<f64, SpectralError> {
    if ring.len() != mass.len() {
        return Err(SpectralError::Length {
            expected: mass.len(),
            found: ring.len(),
        });
    }
    if ring.len() < 2 {
        return Err(SpectralError::RingTooShort);
    }
    let p = RingDft::new(ring.len()).periodogram(ring);
    whittle_from_periodogram(&p, 1, mass)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhittleFit {
    pub alpha: f64,
    pub kappa: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// The optimum sits on the edge of the search box.
    pub at_boundary: bool,
    pub warnings: Vec<String>,
    /// Mean periodogram of the rings (for plotting against the fit).
    pub mean_periodogram: Vec<f64>,
}

/// Maximizes the summed Whittle likelihood of the rows of `rings`
/// (`T' x N`) over `(ln alpha, ln kappa)`.
pub fn fit_whittle(rings: &DMatrix<f64>, cfg: &OptimizerConfig) -> Result<WhittleFit, SpectralError> {
    let (count, n) = rings.shape();
    if count == 0 {
        return Err(SpectralError::NoData);
    }
    if n < 2 {
        return Err(SpectralError::RingTooShort);
    }
    let dft = RingDft::new(n);
    let mut psum = vec![0.0; n];
    let mut row = vec![0.0; n];
    for t in 0..count {
        for j in 0..n {
            row[j] = rings[(t, j)];
        }
        for (acc, p) in psum.iter_mut().zip(dft.periodogram(&row)) {
            *acc += p;
        }
    }

    let objective = |v: &[f64]| -> f64 {
        let (alpha, kappa) = (v[0].exp(), v[1].exp());
        if !(ALPHA_RANGE.0..=ALPHA_RANGE.1).contains(&alpha)
            || !(KAPPA_RANGE.0..=KAPPA_RANGE.1).contains(&kappa)
        {
            return f64::NEG_INFINITY;
        }
        whittle_from_periodogram(&psum, count, &modified_matern_mass(alpha, kappa, n))
            .unwrap_or(f64::NEG_INFINITY)
    };
    let res = nelder_mead_with_steps(objective, &[0.0, 0.0], &[0.5, 0.5], cfg)?;
    let (alpha, kappa) = (res.x[0].exp(), res.x[1].exp());
    let mut warnings = Vec::new();
    let near = |v: f64, (lo, hi): (f64, f64)| v < lo * 1.05 || v > hi / 1.05;
    let at_boundary = near(alpha, ALPHA_RANGE) || near(kappa, KAPPA_RANGE);
    if at_boundary {
        warnings.push(format!(
            "estimate (alpha={alpha:.4e}, kappa={kappa:.4e}) is on the search-box boundary"
        ));
    }
    Ok(WhittleFit {
        alpha,
        kappa,
        loglik: res.fval,
        iterations: res.iterations,
        evaluations: res.evaluations,
        converged: res.converged,
        at_boundary,
        warnings,
        mean_periodogram: psum.iter().map(|p| p / count as f64).collect(),
    })
}

/// `[xi / (1 + 4 sin^2(pi c / N))^tau]^lat_sep`.
pub fn coherence(c: usize, xi: f64, tau: f64, lat_sep: f64, n: usize) -> f64 {
    if lat_sep == 0.0 {
        return 1.0;
    }
    (lat_sep * (xi.ln() - tau * (1.0 + four_sin2(c, n)).ln())).exp()
}

/// `sqrt(f1(c) f2(c)) * rho(c)` for every wavenumber.
pub fn cross_spectral_mass(f1: &SpectralMass, f2: &SpectralMass, xi: f64, tau: f64, lat_sep: f64) -> Vec<f64> {
    let n = f1.len();
    (0..n)
        .map(|c| (f1.f[c] * f2.f[c]).sqrt() * coherence(c, xi, tau, lat_sep, n))
        .collect()
}

/// Coherence matrix `C(c)` across latitudes (the cross-spectral matrix with
/// the masses factored out).
pub fn coherence_matrix(c: usize, n: usize, xi: f64, tau: f64, latitudes: &[f64]) -> DMatrix<f64> {
    let m = latitudes.len();
    DMatrix::from_fn(m, m, |a, b| {
        coherence(c, xi, tau, (latitudes[a] - latitudes[b]).abs(), n)
    })
}

/// `M x M` cross-spectral matrix `F(c)`.
pub fn cross_spectral_matrix(
    c: usize,
    masses: &[SpectralMass],
    xi: f64,
    tau: f64,
    latitudes: &[f64],
) -> DMatrix<f64> {
    let n = masses[0].len();
    let mut f = coherence_matrix(c, n, xi, tau, latitudes);
    let d: Vec<f64> = masses.iter().map(|s| s.f[c].sqrt()).collect();
    for a in 0..d.len() {
        for b in 0..d.len() {
            f[(a, b)] *= d[a] * d[b];
        }
    }
    f
}

/// Number of distinct wavenumbers of a real ring, `0..=N/2`, and the weight
/// (1 for self-conjugate wavenumbers, 2 otherwise) of each.
fn half_spectrum(n: usize) -> impl Iterator<Item = (usize, f64)> {
    (0..=n / 2).map(move |c| (c, if c == 0 || 2 * c == n { 1.0 } else { 2.0 }))
}

/// Real cross-periodogram matrices `P(c) = sum_t Re(u~_t(c) u~_t(c)^H)` over
/// latitudes, for `c = 0..=N/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossPeriodogram {
    pub n_lon: usize,
    pub n_lat: usize,
    pub count: usize,
    pub p: Vec<DMatrix<f64>>,
}

impl CrossPeriodogram {
    /// `u` is `T' x (N M)` with grid site `m * N + j` in column order.
    pub fn new(u: &DMatrix<f64>, n_lon: usize, n_lat: usize) -> Result<Self, SpectralError> {
        if u.ncols() != n_lon * n_lat {
            return Err(SpectralError::Length {
                expected: n_lon * n_lat,
                found: u.ncols(),
            });
        }
        if n_lon < 2 {
            return Err(SpectralError::RingTooShort);
        }
        let dft = RingDft::new(n_lon);
        let half = n_lon / 2 + 1;
        let mut p = vec![DMatrix::zeros(n_lat, n_lat); half];
        let mut ring = vec![0.0; n_lon];
        let mut coef = vec![vec![Complex64::default(); n_lat]; half];
        for t in 0..u.nrows() {
            for m in 0..n_lat {
                for j in 0..n_lon {
                    ring[j] = u[(t, m * n_lon + j)];
                }
                let spec = dft.forward(&ring);
                for c in 0..half {
                    coef[c][m] = spec[c];
                }
            }
            for c in 0..half {
                let z = &coef[c];
                let pc = &mut p[c];
                for a in 0..n_lat {
                    for b in 0..=a {
                        let v = (z[a] * z[b].conj()).re;
                        pc[(a, b)] += v;
                        if a != b {
                            pc[(b, a)] += v;
                        }
                    }
                }
            }
        }
        Ok(Self {
            n_lon,
            n_lat,
            count: u.nrows(),
            p,
        })
    }

    /// Diagonal of `P(c)` for one latitude over all `N` wavenumbers,
    /// divided by the number of time points.
    pub fn mean_periodogram(&self, m: usize) -> Vec<f64> {
        let n = self.n_lon;
        (0..n)
            .map(|c| self.p[c.min(n - c)][(m, m)] / self.count as f64)
            .collect()
    }

    /// Mean cross-periodogram between latitudes `a` and `b` (real part).
    pub fn mean_cross_periodogram(&self, a: usize, b: usize) -> Vec<f64> {
        let n = self.n_lon;
        (0..n)
            .map(|c| self.p[c.min(n - c)][(a, b)] / self.count as f64)
            .collect()
    }

    /// `P(c)` scaled by the masses, `D^-1 P D^-1` with `D = diag(sqrt f_m(c))`,
    /// plus `sum_m ln f_m(c)`; the coherence step reuses these.
    pub fn whiten(&self, masses: &[SpectralMass]) -> Result<WhitenedPeriodogram, SpectralError> {
        if masses.len() != self.n_lat {
            return Err(SpectralError::Length {
                expected: self.n_lat,
                found: masses.len(),
            });
        }
        let mut q = Vec::with_capacity(self.p.len());
        let mut log_f = Vec::with_capacity(self.p.len());
        for (c, pc) in self.p.iter().enumerate() {
            let mut d = Vec::with_capacity(self.n_lat);
            for s in masses {
                if s.len() != self.n_lon {
                    return Err(SpectralError::Length {
                        expected: self.n_lon,
                        found: s.len(),
                    });
                }
                let f = s.f[c];
                if !(f > 0.0 && f.is_finite()) {
                    return Err(SpectralError::ZeroMass { c });
                }
                d.push(f.sqrt());
            }
            log_f.push(d.iter().map(|v| 2.0 * v.ln()).sum());
            q.push(DMatrix::from_fn(self.n_lat, self.n_lat, |a, b| pc[(a, b)] / (d[a] * d[b])));
        }
        Ok(WhitenedPeriodogram {
            n_lon: self.n_lon,
            count: self.count,
            q,
            log_f,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedPeriodogram {
    pub n_lon: usize,
    pub count: usize,
    q: Vec<DMatrix<f64>>,
    log_f: Vec<f64>,
}

impl WhitenedPeriodogram {
    /// Block-circulant log-likelihood at coherence parameters `(xi, tau)`.
    pub fn loglik(&self, xi: f64, tau: f64, latitudes: &[f64]) -> Result<f64, SpectralError> {
        let n = self.n_lon;
        let m = latitudes.len() as f64;
        let k = self.count as f64;
        let terms: Vec<Result<f64, SpectralError>> = half_spectrum(n)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(c, w)| {
                let cm = coherence_matrix(c, n, xi, tau, latitudes);
                let l = cholesky(&cm).map_err(|_| SpectralError::NotPositiveDefinite { c })?;
                let logdet = chol_logdet(&l) + self.log_f[c];
                // tr(C^-1 Q) = tr(L^-1 Q L^-T)
                let mut x = self.q[c].clone();
                solve_lower_in_place(&l, &mut x);
                let mut xt = x.transpose();
                solve_lower_in_place(&l, &mut xt);
                let quad = xt.trace();
                Ok(w * (-0.5 * k * (m * LN_2PI + logdet) - 0.5 * quad))
            })
            .collect();
        let mut total = 0.0;
        for t in terms {
            total += t?;
        }
        Ok(total)
    }
}

/// Log-density of the grid residuals `u` (`T' x (N M)`) under the block-
/// circulant covariance built from `masses`, `xi`, `tau` and `latitudes`.
pub fn coherence_loglik(
    u: &DMatrix<f64>,
    masses: &[SpectralMass],
    xi: f64,
    tau: f64,
    latitudes: &[f64],
) -> Result<f64, SpectralError> {
    let n = masses.first().map(|s| s.len()).ok_or(SpectralError::NoData)?;
    let cp = CrossPeriodogram::new(u, n, latitudes.len())?;
    cp.whiten(masses)?.loglik(xi, tau, latitudes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceFit {
    pub xi: f64,
    pub tau: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Maximizes the block-circulant likelihood over `(logit xi, ln tau)` with
/// the per-latitude masses held fixed.
pub fn fit_coherence(
    cp: &CrossPeriodogram,
    masses: &[SpectralMass],
    latitudes: &[f64],
    cfg: &OptimizerConfig,
) -> Result<CoherenceFit, SpectralError> {
    let wp = cp.whiten(masses)?;
    let objective = |v: &[f64]| -> f64 {
        let xi = logistic(v[0]);
        let tau = v[1].exp();
        if !(xi > 0.0 && xi < 1.0) || tau > TAU_MAX {
            return f64::NEG_INFINITY;
        }
        wp.loglik(xi, tau, latitudes).unwrap_or(f64::NEG_INFINITY)
    };
    let x0 = [0.0, 0.5f64.ln()];
    let res = nelder_mead_with_steps(objective, &x0, &[1.0, 1.0], cfg)?;
    let mut warnings = Vec::new();
    let flat = flat_directions(&hessian_fd(objective, &res.x, 1e-3), 1e-6);
    if flat > 0 {
        warnings.push(format!(
            "coherence parameters are not identifiable from these data ({flat} flat direction(s))"
        ));
    }
    Ok(CoherenceFit {
        xi: logistic(res.x[0]),
        tau: res.x[1].exp(),
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

    #[test]
    fn mass_is_normalized_and_peaks_at_zero() {
        let m = modified_matern_mass(1.0, 0.5, 4);
        let mean = m.f.iter().sum::<f64>() / 4.0;
        assert!((mean - 1.0).abs() < 1e-15);
        assert!(m.f[0] > m.f[1] && m.f[1] > m.f[2]);
        assert_eq!(m.f[1], m.f[3]);
        // (1 + 4 sin^2(pi c / 4))^-1 = 1, 1/3, 1/5, 1/3
        let raw = [1.0, 1.0 / 3.0, 0.2, 1.0 / 3.0];
        let s: f64 = raw.iter().sum::<f64>() / 4.0;
        for c in 0..4 {
            assert!((m.f[c] - raw[c] / s).abs() < 1e-14);
        }
    }

    #[test]
    fn white_ring_of_zeros() {
        let ll = whittle_loglik(&[0.0; 4], &SpectralMass { f: vec![1.0; 4] }).unwrap();
        assert!((ll + 2.0 * LN_2PI).abs() < 1e-14);
    }

    #[test]
    fn zero_mass_rejected() {
        let err = whittle_loglik(&[0.0; 4], &SpectralMass { f: vec![1.0, 0.0, 2.0, 1.0] });
        assert_eq!(err, Err(SpectralError::ZeroMass { c: 1 }));
    }

    #[test]
    fn coherence_hand_values() {
        assert_eq!(coherence(3, 0.9, 0.5, 0.0, 8), 1.0);
        assert!((coherence(3, 0.9, 0.0, 2.0, 8) - 0.81).abs() < 1e-15);
        // 1 + 4 sin^2(pi c / N) is 3 at c = N/4 and 5 at c = N/2.
        let expect = (0.9 / 3f64.sqrt()).powi(2);
        assert!((coherence(2, 0.9, 0.5, 2.0, 8) - expect).abs() < 1e-15);
        let expect = (0.9 / 5f64.sqrt()).powi(2);
        assert!((coherence(4, 0.9, 0.5, 2.0, 8) - expect).abs() < 1e-15);
    }

    #[test]
    fn cross_mass_diagonal_and_symmetry() {
        let f1 = modified_matern_mass(0.5, 1.0, 16);
        let f2 = modified_matern_mass(1.5, 0.3, 16);
        assert_eq!(cross_spectral_mass(&f1, &f1, 0.7, 0.4, 0.0), f1.f);
        let a = cross_spectral_mass(&f1, &f2, 0.7, 0.4, 3.0);
        let b = cross_spectral_mass(&f2, &f1, 0.7, 0.4, 3.0);
        assert_eq!(a, b);
        for c in 0..16 {
            assert!(a[c] <= (f1.f[c] * f2.f[c]).sqrt());
        }
    }

    #[test]
    fn dft_round_trip() {
        let x = [0.3, -1.2, 2.0, 0.7, 0.1];
        let d = RingDft::new(5);
        let back = d.inverse_real(&d.forward(&x));
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
