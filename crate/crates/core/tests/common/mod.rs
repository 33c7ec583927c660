//! Helpers shared by the integration suites.
#![allow(dead_code)]

use nalgebra::DMatrix;
use proptest::test_runner::{Config, RngSeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use smle_core::{
    simulate, ArmaSpec, DiagonalVarmaModel, InnovationModel, MeanModel, SimulationDesign, SpaceTimeData,
};

/// Seeded proptest configuration without on-disk failure persistence.
pub fn seeded(cases: u32, seed: u64) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Polynomial coefficients from partial autocorrelations in (-1, 1); the
/// result `a` has `1 - a_1 z - ... - a_p z^p` with all roots outside the
/// unit circle.
pub fn from_pacf(r: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = Vec::new();
    for (k, rk) in r.iter().enumerate() {
        let prev = a.clone();
        a.push(*rk);
        for j in 0..k {
            a[j] = prev[j] - rk * prev[k - 1 - j];
        }
    }
    a
}

/// The line-of-sites design: AR(2) with known zero mean at unit-spaced sites.
pub fn line_model(s: usize) -> DiagonalVarmaModel {
    DiagonalVarmaModel {
        sites: (0..s).map(|i| vec![i as f64]).collect(),
        arma: vec![ArmaSpec::ar(0.0, 1.2, vec![0.5, 0.25]); s],
        innovation: InnovationModel::IsotropicMatern {
            alpha: 0.3,
            kappa: 1.5,
        },
        mean_model: MeanModel::Fixed,
    }
}

/// Axially symmetric grid model with AR(1) cells; site `m * n_lon + j`.
pub fn axial_model(n_lon: usize, n_lat: usize, alpha: f64, kappa: f64, xi: f64, tau: f64) -> DiagonalVarmaModel {
    let mut sites = Vec::with_capacity(n_lon * n_lat);
    for m in 0..n_lat {
        for j in 0..n_lon {
            sites.push(vec![j as f64, m as f64]);
        }
    }
    DiagonalVarmaModel {
        arma: vec![ArmaSpec::ar(0.0, 1.0, vec![0.4]); sites.len()],
        sites,
        innovation: InnovationModel::AxiallySymmetric {
            alpha_m: vec![alpha; n_lat],
            kappa_m: vec![kappa; n_lat],
            xi,
            tau,
            n_lon,
            latitudes: (0..n_lat).map(|m| m as f64).collect(),
        },
        mean_model: MeanModel::Constant,
    }
}

pub fn simulate_data(model: &DiagonalVarmaModel, t: usize, seed: u64) -> SpaceTimeData {
    simulate(&SimulationDesign {
        model: model.clone(),
        t,
        burn_in: None,
        seed,
        record_innovations: false,
    })
    .expect("simulation")
    .data
}

/// Sample correlation of two columns about their means.
pub fn corr(m: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let n = m.nrows() as f64;
    let ma = m.column(a).sum() / n;
    let mb = m.column(b).sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for t in 0..m.nrows() {
        let (x, y) = (m[(t, a)] - ma, m[(t, b)] - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    sab / (saa * sbb).sqrt()
}
