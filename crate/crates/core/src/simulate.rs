//! Seeded simulation of diagonal VARMA data.
//!
//! Innovations are drawn from a ChaCha8 stream selected by the time index, so
//! the draws for a given `(seed, time, site)` never depend on how the work is
//! scheduled. The recursion starts from a zero state and discards a burn-in.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SpaceTimeData;
use crate::linalg::cholesky;
use crate::matern::{build_correlation, MaternError};
use crate::model::{DiagonalVarmaModel, InnovationModel, ModelError};
use crate::spectral::{cross_spectral_matrix, modified_matern_mass, RingDft, SpectralMass};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
    #[error("innovation correlation: {0}")]
    Correlation(#[from] MaternError),
    #[error("cross-spectral matrix not positive definite at wavenumber {c}")]
    Spectral { c: usize },
    #[error("T must be at least 1")]
    NoTimes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDesign {
    pub model: DiagonalVarmaModel,
    #[serde(rename = "T")]
    pub t: usize,
    /// Discarded initial steps; `None` uses [`default_burn_in`].
    #[serde(default)]
    pub burn_in: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub record_innovations: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub data: SpaceTimeData,
    /// Unscaled innovations `U_t` for the returned time points (`T x S`).
    pub innovations: Option<DMatrix<f64>>,
}

pub fn default_burn_in(model: &DiagonalVarmaModel) -> usize {
    let m = model.arma.iter().map(|a| a.p.max(a.q)).max().unwrap_or(0);
    50 * m + 50
}

/// Draws `U_t` for one time step.
pub enum InnovationSampler {
    Dense { chol: DMatrix<f64> },
    Spectral(SpectralSampler),
}

impl InnovationSampler {
    pub fn new(model: &DiagonalVarmaModel) -> Result<Self, SimError> {
        match &model.innovation {
            InnovationModel::IsotropicMatern { alpha, kappa } => {
                let f = build_correlation(&model.sites, *alpha, *kappa, 0.0)?;
                Ok(Self::Dense { chol: f.chol })
            }
            InnovationModel::DenseCorrelation { r } => {
                let s = r.len();
                let m = DMatrix::from_fn(s, s, |i, j| r[i][j]);
                let chol = cholesky(&m).map_err(|pivot| MaternError::NotPositiveDefinite { pivot })?;
                Ok(Self::Dense { chol })
            }
            InnovationModel::AxiallySymmetric {
                alpha_m,
                kappa_m,
                xi,
                tau,
                n_lon,
                latitudes,
            } => {
                let masses: Vec<SpectralMass> = alpha_m
                    .iter()
                    .zip(kappa_m)
                    .map(|(a, k)| modified_matern_mass(*a, *k, *n_lon))
                    .collect();
                Ok(Self::Spectral(SpectralSampler::new(&masses, *xi, *tau, latitudes)?))
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Dense { chol } => chol.nrows(),
            Self::Spectral(s) => s.n_lon * s.n_lat,
        }
    }

    /// Fills `out` with one innovation vector from the stream of time `t`.
    pub fn draw(&self, seed: u64, t: u64, out: &mut [f64]) {
        let mut rng = stream(seed, t);
        match self {
            Self::Dense { chol } => {
                let s = chol.nrows();
                let z: Vec<f64> = (0..s).map(|_| rng.sample(StandardNormal)).collect();
                for i in 0..s {
                    out[i] = (0..=i).map(|k| chol[(i, k)] * z[k]).sum();
                }
            }
            Self::Spectral(sp) => sp.draw(&mut rng, out),
        }
    }
}

fn stream(seed: u64, t: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t);
    rng
}

/// Samples grid innovations wavenumber by wavenumber: `u~(c) = L(c) w` with
/// `L(c) L(c)^T = F(c)`, conjugate-symmetric in `c`, then an inverse unitary
/// DFT along each ring.
pub struct SpectralSampler {
    n_lon: usize,
    n_lat: usize,
    factors: Vec<DMatrix<f64>>,
    dft: RingDft,
}

impl SpectralSampler {
    pub fn new(masses: &[SpectralMass], xi: f64, tau: f64, latitudes: &[f64]) -> Result<Self, SimError> {
        let n_lon = masses[0].len();
        let factors = (0..=n_lon / 2)
            .map(|c| {
                cholesky(&cross_spectral_matrix(c, masses, xi, tau, latitudes))
                    .map_err(|_| SimError::Spectral { c })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            n_lon,
            n_lat: latitudes.len(),
            factors,
            dft: RingDft::new(n_lon),
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let (n, m) = (self.n_lon, self.n_lat);
        let mut spec = vec![vec![Complex64::default(); n]; m];
        for (c, l) in self.factors.iter().enumerate() {
            let real_only = c == 0 || 2 * c == n;
            let z1: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            let z2: Vec<f64> = if real_only {
                vec![0.0; m]
            } else {
                (0..m).map(|_| rng.sample(StandardNormal)).collect()
            };
            let scale = if real_only { 1.0 } else { std::f64::consts::FRAC_1_SQRT_2 };
            for a in 0..m {
                let (mut re, mut im) = (0.0, 0.0);
                for k in 0..=a {
                    re += l[(a, k)] * z1[k];
                    im += l[(a, k)] * z2[k];
                }
                let w = Complex64::new(re * scale, im * scale);
                spec[a][c] = w;
                if !real_only {
                    spec[a][n - c] = w.conj();
                }
            }
        }
        for (a, s) in spec.iter().enumerate() {
            let ring = self.dft.inverse_real(s);
            out[a * n..(a + 1) * n].copy_from_slice(&ring);
        }
    }
}

/// Simulates `T` observations after a burn-in from a zero initial state.
pub fn simulate(design: &SimulationDesign) -> Result<SimulationOutput, SimError> {
    let model = &design.model;
    model.validate()?;
    if design.t == 0 {
        return Err(SimError::NoTimes);
    }
    let sampler = InnovationSampler::new(model)?;
    let s = model.n_sites();
    let burn = design.burn_in.unwrap_or_else(|| default_burn_in(model));
    let total = burn + design.t;

    // x: zero-mean ARMA part; u: unscaled innovations. Row = time step.
    let mut x = DMatrix::<f64>::zeros(total, s);
    let mut u = DMatrix::<f64>::zeros(total, s);
    let mut draw = vec![0.0; s];
    for t in 0..total {
        sampler.draw(design.seed, t as u64, &mut draw);
        for (site, spec) in model.arma.iter().enumerate() {
            u[(t, site)] = draw[site];
            let mut v = spec.sigma * draw[site];
            for (j, pi) in spec.pi_ma.iter().enumerate() {
                if t > j {
                    v += spec.sigma * pi * u[(t - j - 1, site)];
                }
            }
            for (i, phi) in spec.phi.iter().enumerate() {
                if t > i {
                    v += phi * x[(t - i - 1, site)];
                }
            }
            x[(t, site)] = v;
        }
    }

    let values = DMatrix::from_fn(design.t, s, |r, c| {
        model.arma[c].mean_at((r + 1) as f64) + x[(burn + r, c)]
    });
    let innovations = design
        .record_innovations
        .then(|| u.rows(burn, design.t).into_owned());
    Ok(SimulationOutput {
        data: SpaceTimeData {
            values,
            sites: model.sites.clone(),
            t0: 1,
        },
        innovations,
    })
}
