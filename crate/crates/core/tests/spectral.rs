mod common;

use std::f64::consts::PI;

use common::{axial_model, normals, rng, seeded};
use nalgebra::DMatrix;
use proptest::prelude::*;
use smle_core::simulate::InnovationSampler;
use smle_core::spectral::{cross_spectral_mass, fit_coherence, fit_whittle, CrossPeriodogram, RingDft};
use smle_core::{coherence, coherence_loglik, modified_matern_mass, whittle_loglik, OptimizerConfig, SpectralMass};

/// Independent mass evaluation: direct powers, normalized to mean 1.
fn mass_oracle(alpha: f64, kappa: f64, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|c| {
            let s = (PI * c as f64 / n as f64).sin();
            (alpha * alpha + 4.0 * s * s).powf(-(kappa + 0.5))
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    raw.iter().map(|v| v / mean).collect()
}

fn coherence_oracle(c: usize, n: usize, xi: f64, tau: f64, sep: f64) -> f64 {
    let s = (PI * c as f64 / n as f64).sin();
    (xi / (1.0 + 4.0 * s * s).powf(tau)).powf(sep)
}

/// Rows of a `count x n` matrix drawn from the circulant covariance with
/// eigenvalues `f`, through a dense Cholesky factor.
fn dense_rings(f: &[f64], count: usize, seed: u64) -> DMatrix<f64> {
    let n = f.len();
    let l = smle_oracle::circulant_covariance(f).cholesky().unwrap().l();
    let z = DMatrix::from_vec(n, count, normals(&mut rng(seed), n * count));
    (l * z).transpose()
}

proptest! {
    #![proptest_config(seeded(64, 0x5BEC))]

    #[test]
    fn dft_preserves_energy(ring in prop::collection::vec(-10.0f64..10.0, 2..=64)) {
        let dft = RingDft::new(ring.len());
        let energy: f64 = dft.forward(&ring).iter().map(|v| v.norm_sqr()).sum();
        let direct: f64 = ring.iter().map(|v| v * v).sum();
        prop_assert!((energy - direct).abs() < 1e-10 * direct.max(1.0));
    }

    #[test]
    fn mass_is_normalized_and_matches_direct_evaluation(alpha in 0.01f64..10.0, kappa in 0.01f64..8.0, n in 2usize..=300) {
        let m = modified_matern_mass(alpha, kappa, n);
        let mean = m.f.iter().sum::<f64>() / n as f64;
        prop_assert!((mean - 1.0).abs() < 1e-12);
        for (a, b) in m.f.iter().zip(mass_oracle(alpha, kappa, n)) {
            prop_assert!((a - b).abs() < 1e-12 * b.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn coherence_lies_in_unit_interval(c in 0usize..64, n in 2usize..=64, xi in 1e-6f64..0.999_999, tau in 0.0f64..5.0, sep in 0.0f64..10.0) {
        let v = coherence(c % n, xi, tau, sep, n);
        prop_assert!(v > 0.0 || sep > 0.0 && v == 0.0);
        prop_assert!(v <= 1.0);
        prop_assert!((v - coherence_oracle(c % n, n, xi, tau, sep)).abs() < 1e-12);
    }

    #[test]
    fn whittle_matches_dense_circulant(n in 2usize..=64, alpha in 0.3f64..3.0, kappa in 0.2f64..2.0, seed in any::<u64>()) {
        let mass = modified_matern_mass(alpha, kappa, n);
        let ring = normals(&mut rng(seed), n);
        let got = whittle_loglik(&ring, &mass).unwrap();
        let cov = smle_oracle::circulant_covariance(&mass_oracle(alpha, kappa, n));
        let want = smle_oracle::mvn_logpdf(&ring, &vec![0.0; n], &cov);
        prop_assert!((got - want).abs() < 1e-8, "got {got}, oracle {want}");
    }

    #[test]
    fn whittle_is_rotation_invariant(n in 2usize..=64, shift in 0usize..64, seed in any::<u64>()) {
        let mass = modified_matern_mass(0.7, 1.3, n);
        let ring = normals(&mut rng(seed), n);
        let mut rot = ring.clone();
        rot.rotate_left(shift % n);
        let a = whittle_loglik(&ring, &mass).unwrap();
        let b = whittle_loglik(&rot, &mass).unwrap();
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn coherence_loglik_matches_dense_block_circulant(
        n in 2usize..=8,
        m in 1usize..=3,
        count in 1usize..=4,
        xi in 0.05f64..0.95,
        tau in 0.0f64..2.0,
        params in prop::collection::vec((0.3f64..3.0, 0.2f64..2.0), 3),
        gaps in prop::collection::vec(0.5f64..3.0, 3),
        seed in any::<u64>(),
    ) {
        let latitudes: Vec<f64> = gaps[..m].iter().scan(0.0, |acc, g| { *acc += g; Some(*acc) }).collect();
        let masses: Vec<SpectralMass> = params[..m].iter().map(|(a, k)| modified_matern_mass(*a, *k, n)).collect();
        let f: Vec<Vec<f64>> = params[..m].iter().map(|(a, k)| mass_oracle(*a, *k, n)).collect();
        let cross: Vec<Vec<Vec<f64>>> = (0..m)
            .map(|a| (0..m).map(|b| (0..n).map(|c| {
                (f[a][c] * f[b][c]).sqrt() * coherence_oracle(c, n, xi, tau, (latitudes[a] - latitudes[b]).abs())
            }).collect()).collect())
            .collect();
        let cov = smle_oracle::block_circulant_covariance(&cross);
        let u = DMatrix::from_vec(count, n * m, normals(&mut rng(seed), count * n * m));
        let want: f64 = (0..count)
            .map(|t| {
                let row: Vec<f64> = u.row(t).iter().copied().collect();
                smle_oracle::mvn_logpdf(&row, &vec![0.0; n * m], &cov)
            })
            .sum();
        let got = coherence_loglik(&u, &masses, xi, tau, &latitudes).unwrap();
        prop_assert!((got - want).abs() < 1e-6, "got {got}, oracle {want}");
    }

    #[test]
    fn cross_mass_is_bounded_and_symmetric(a1 in 0.2f64..3.0, k1 in 0.2f64..3.0, a2 in 0.2f64..3.0, k2 in 0.2f64..3.0, sep in 0.0f64..4.0) {
        let (f1, f2) = (modified_matern_mass(a1, k1, 16), modified_matern_mass(a2, k2, 16));
        let x = cross_spectral_mass(&f1, &f2, 0.8, 0.4, sep);
        let y = cross_spectral_mass(&f2, &f1, 0.8, 0.4, sep);
        for c in 0..16 {
            prop_assert_eq!(x[c], y[c]);
            prop_assert!(x[c] <= (f1.f[c] * f2.f[c]).sqrt() * (1.0 + 1e-15));
        }
    }
}

#[test]
fn single_latitude_reduces_to_summed_whittle() {
    let n = 12;
    let mass = modified_matern_mass(0.6, 1.1, n);
    let u = DMatrix::from_vec(5, n, normals(&mut rng(8), 5 * n));
    let whittle: f64 = (0..5)
        .map(|t| whittle_loglik(&u.row(t).iter().copied().collect::<Vec<_>>(), &mass).unwrap())
        .sum();
    let got = coherence_loglik(&u, std::slice::from_ref(&mass), 0.7, 0.3, &[0.0]).unwrap();
    assert!((got - whittle).abs() < 1e-10);
}

#[test]
fn vanishing_coherence_gives_independent_latitudes() {
    let (n, m, count) = (8, 3, 4);
    let masses: Vec<SpectralMass> = (0..m).map(|k| modified_matern_mass(0.4 + 0.3 * k as f64, 1.0, n)).collect();
    let u = DMatrix::from_vec(count, n * m, normals(&mut rng(12), count * n * m));
    let mut sum = 0.0;
    for (k, mass) in masses.iter().enumerate() {
        for t in 0..count {
            let ring: Vec<f64> = (0..n).map(|j| u[(t, k * n + j)]).collect();
            sum += whittle_loglik(&ring, mass).unwrap();
        }
    }
    let got = coherence_loglik(&u, &masses, 1e-12, 0.5, &[0.0, 1.0, 2.0]).unwrap();
    assert!((got - sum).abs() < 1e-8, "{got} vs {sum}");
}

#[test]
fn whittle_fit_recovers_simulated_parameters() {
    let f = mass_oracle(0.5, 1.0, 64);
    let rings = dense_rings(&f, 200, 41);
    let fit = fit_whittle(&rings, &OptimizerConfig::default()).unwrap();
    assert!((fit.alpha / 0.5 - 1.0).abs() < 0.1, "alpha {}", fit.alpha);
    assert!((fit.kappa / 1.0 - 1.0).abs() < 0.1, "kappa {}", fit.kappa);
    assert!(!fit.at_boundary);
}

#[test]
fn white_short_rings_push_the_fit_to_the_boundary() {
    let rings = DMatrix::from_vec(5000, 4, normals(&mut rng(3), 20_000));
    let fit = fit_whittle(&rings, &OptimizerConfig::default()).unwrap();
    assert!(fit.at_boundary, "alpha {}, kappa {}", fit.alpha, fit.kappa);
}

fn grid_innovations(n: usize, m: usize, count: usize, xi: f64, tau: f64, seed: u64) -> DMatrix<f64> {
    let model = axial_model(n, m, 0.5, 1.0, xi, tau);
    let sampler = InnovationSampler::new(&model).unwrap();
    let mut u = DMatrix::zeros(count, n * m);
    let mut row = vec![0.0; n * m];
    for t in 0..count {
        sampler.draw(seed, t as u64, &mut row);
        for (j, v) in row.iter().enumerate() {
            u[(t, j)] = *v;
        }
    }
    u
}

#[test]
fn coherence_fit_recovers_simulated_parameters() {
    let (n, m) = (32, 8);
    let u = grid_innovations(n, m, 100, 0.9, 0.3, 17);
    let masses = vec![modified_matern_mass(0.5, 1.0, n); m];
    let latitudes: Vec<f64> = (0..m).map(|k| k as f64).collect();
    let cp = CrossPeriodogram::new(&u, n, m).unwrap();
    let fit = fit_coherence(&cp, &masses, &latitudes, &OptimizerConfig::default()).unwrap();
    assert!((fit.xi / 0.9 - 1.0).abs() < 0.15, "xi {}", fit.xi);
    assert!((fit.tau / 0.3 - 1.0).abs() < 0.15, "tau {}", fit.tau);
}

#[test]
fn single_latitude_coherence_is_not_identifiable() {
    let u = grid_innovations(16, 1, 50, 0.9, 0.3, 5);
    let cp = CrossPeriodogram::new(&u, 16, 1).unwrap();
    let masses = vec![modified_matern_mass(0.5, 1.0, 16)];
    let fit = fit_coherence(&cp, &masses, &[0.0], &OptimizerConfig::default()).unwrap();
    assert!(fit.warnings.iter().any(|w| w.contains("identifiable")), "{:?}", fit.warnings);
}

#[test]
fn spectral_sampler_matches_dense_block_circulant_sampler() {
    let (n, m, xi, tau) = (8, 3, 0.8, 0.4);
    let count = 2000;
    let spectral = grid_innovations(n, m, count, xi, tau, 99);
    let f = mass_oracle(0.5, 1.0, n);
    let cross: Vec<Vec<Vec<f64>>> = (0..m)
        .map(|a| {
            (0..m)
                .map(|b| (0..n).map(|c| f[c] * coherence_oracle(c, n, xi, tau, a.abs_diff(b) as f64)).collect())
                .collect()
        })
        .collect();
    let l = smle_oracle::block_circulant_covariance(&cross).cholesky().unwrap().l();
    let z = DMatrix::from_vec(n * m, count, normals(&mut rng(100), n * m * count));
    let dense = (l * z).transpose();

    // One draw per time point keeps the KS samples independent.
    let stats = |u: &DMatrix<f64>| -> [Vec<f64>; 3] {
        let col = |f: &dyn Fn(usize) -> f64| (0..u.nrows()).map(f).collect::<Vec<f64>>();
        [
            col(&|t| u[(t, 0)]),
            col(&|t| u[(t, 0)] + u[(t, 1)]),
            col(&|t| u[(t, 0)] + u[(t, n)]),
        ]
    };
    for (name, (a, b)) in ["marginal", "along the ring", "across latitudes"]
        .iter()
        .zip(stats(&spectral).iter().zip(stats(&dense).iter()))
    {
        let (_, p) = smle_oracle::ks_two_sample(a, b);
        assert!(p > 0.01, "{name}: p = {p}");
    }
}
