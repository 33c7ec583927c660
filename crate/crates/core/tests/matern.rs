mod common;

use common::{normals, rng, seeded};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use smle_core::matern::fit_innovation_matern;
use smle_core::{build_correlation, innovation_loglik, matern_correlation, CorrelationMatrixFactor, OptimizerConfig};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Half-integer closed forms of the unit-normalized kernel in `x = alpha h`.
fn closed_form(x: f64, kappa2: u8) -> f64 {
    match kappa2 {
        1 => (-x).exp(),
        3 => (1.0 + x) * (-x).exp(),
        5 => (1.0 + x + x * x / 3.0) * (-x).exp(),
        _ => unreachable!(),
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn correlation_is_non_increasing_in_distance() {
    let mut r = rng(31);
    for _ in 0..10 {
        let alpha = r.random_range(0.05..5.0);
        let kappa = r.random_range(0.1..6.0);
        let mut prev = matern_correlation(0.0, alpha, kappa);
        assert_eq!(prev, 1.0);
        for i in 1..=200 {
            let v = matern_correlation(20.0 * i as f64 / 200.0, alpha, kappa);
            assert!(v <= prev && v >= 0.0, "alpha {alpha}, kappa {kappa}, step {i}: {v} > {prev}");
            prev = v;
        }
    }
}

#[test]
fn three_halves_matches_closed_form() {
    let v = matern_correlation(1.0, 0.3, 1.5);
    assert!(v > 0.0 && v < 1.0);
    assert!((v - closed_form(0.3, 3)).abs() < 1e-12);
}

#[test]
fn line_design_logdet_matches_eigenvalues() {
    let sites: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
    let f = build_correlation(&sites, 0.3, 1.5, 0.0).unwrap();
    assert!((f.logdet - smle_oracle::logdet_eigen(&f.r)).abs() < 1e-8);
    for i in 0..20 {
        assert_eq!(f.r[(i, i)], 1.0);
        for j in 0..20 {
            assert!((f.r[(i, j)] - f.r[(j, i)]).abs() <= 1e-14);
        }
    }
    let back = &f.chol * f.chol.transpose();
    assert!((back - &f.r).abs().max() < 1e-10);
}

#[test]
fn two_sites_flag_non_identifiability() {
    let sites = vec![vec![0.0], vec![1.0]];
    let f = build_correlation(&sites, 0.5, 1.0, 0.0).unwrap();
    let mut r = rng(4);
    let z = DMatrix::from_vec(2, 200, normals(&mut r, 400));
    let u = (&f.chol * z).transpose();
    let fit = fit_innovation_matern(&u, &sites, &OptimizerConfig::default()).unwrap();
    assert!(fit.warnings.iter().any(|w| w.contains("identifiable")), "{:?}", fit.warnings);
}

proptest! {
    #![proptest_config(seeded(64, 0x3A7E))]

    #[test]
    fn identity_correlation_is_standard_normal(t in 1usize..20, s in 1usize..8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let u = DMatrix::from_vec(t, s, normals(&mut r, t * s));
        let got = innovation_loglik(&u, &CorrelationMatrixFactor::identity(s)).unwrap();
        let want: f64 = u.iter().map(|v| -0.5 * (LN_2PI + v * v)).sum();
        prop_assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn pipeline_matches_dense_kronecker_gaussian(
        s in 1usize..=5,
        tp in 1usize..=5,
        alpha in 0.5f64..3.0,
        kappa2 in prop::sample::select(vec![1u8, 3, 5]),
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        // At least unit spacing keeps R well conditioned.
        let sites: Vec<Vec<f64>> = (0..s).map(|i| vec![2.0 * i as f64 + r.random_range(0.0..1.0), r.random_range(0.0..4.0)]).collect();
        let kappa = kappa2 as f64 / 2.0;
        let f = build_correlation(&sites, alpha, kappa, 0.0).unwrap();
        let rr = DMatrix::from_fn(s, s, |i, j| {
            if i == j { 1.0 } else { closed_form(alpha * distance(&sites[i], &sites[j]), kappa2) }
        });
        let u = DMatrix::from_vec(tp, s, normals(&mut r, tp * s));
        // Time-major stacking: covariance I_T' (x) R.
        let mut big = DMatrix::zeros(tp * s, tp * s);
        for t in 0..tp {
            big.view_mut((t * s, t * s), (s, s)).copy_from(&rr);
        }
        let flat: Vec<f64> = (0..tp).flat_map(|t| (0..s).map(move |c| (t, c))).map(|(t, c)| u[(t, c)]).collect();
        let want = smle_oracle::mvn_logpdf(&flat, &vec![0.0; tp * s], &big);
        let got = innovation_loglik(&u, &f).unwrap();
        prop_assert!((got - want).abs() < 1e-8, "got {got}, oracle {want}");
    }

    #[test]
    fn permuting_sites_and_columns_leaves_loglik_unchanged(s in 2usize..=6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let sites: Vec<Vec<f64>> = (0..s).map(|i| vec![1.5 * i as f64 + r.random_range(0.0..0.5)]).collect();
        let u = DMatrix::from_vec(4, s, normals(&mut r, 4 * s));
        let base = innovation_loglik(&u, &build_correlation(&sites, 0.7, 1.2, 0.0).unwrap()).unwrap();
        let perm: Vec<usize> = (0..s).rev().collect();
        let psites: Vec<Vec<f64>> = perm.iter().map(|&i| sites[i].clone()).collect();
        let pu = DMatrix::from_fn(4, s, |t, c| u[(t, perm[c])]);
        let moved = innovation_loglik(&pu, &build_correlation(&psites, 0.7, 1.2, 0.0).unwrap()).unwrap();
        prop_assert!((base - moved).abs() < 1e-12 * base.abs().max(1.0));
    }
}
