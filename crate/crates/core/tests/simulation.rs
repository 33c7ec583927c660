mod common;

use common::{corr, line_model};
use smle_core::{
    arma_autocovariance, build_correlation, simulate, ArmaSpec, DiagonalVarmaModel, InnovationModel, MeanModel,
    SimulationDesign,
};

fn design(model: DiagonalVarmaModel, t: usize, seed: u64, record: bool) -> SimulationDesign {
    SimulationDesign {
        model,
        t,
        burn_in: None,
        seed,
        record_innovations: record,
    }
}

#[test]
fn identical_designs_give_identical_output() {
    let d = design(line_model(6), 80, 123, true);
    let (a, b) = (simulate(&d).unwrap(), simulate(&d).unwrap());
    assert_eq!(a.data, b.data);
    assert_eq!(a.innovations, b.innovations);
    let c = simulate(&SimulationDesign { seed: 124, ..d }).unwrap();
    assert_ne!(a.data, c.data);
}

#[test]
fn white_noise_moments() {
    let t = 2000;
    let model = DiagonalVarmaModel {
        sites: (0..4).map(|i| vec![i as f64]).collect(),
        arma: (0..4).map(|i| ArmaSpec::white_noise(i as f64 - 1.0, 0.5 + i as f64)).collect(),
        innovation: InnovationModel::DenseCorrelation {
            r: (0..4).map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
        },
        mean_model: MeanModel::Constant,
    };
    let data = simulate(&design(model.clone(), t, 5, false)).unwrap().data;
    let band = 4.0 / (t as f64).sqrt();
    for (s, spec) in model.arma.iter().enumerate() {
        let y = data.series(s);
        let mean = y.iter().sum::<f64>() / t as f64;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1) as f64).sqrt();
        assert!((mean - spec.mu).abs() < band * spec.sigma, "site {s}: mean {mean}");
        assert!((sd / spec.sigma - 1.0).abs() < band, "site {s}: sd {sd}");
    }
}

#[test]
fn lag_one_autocorrelation_matches_theory() {
    let model = line_model(20);
    let g = arma_autocovariance(&model.arma[0], 1).unwrap();
    let rho1 = g[1] / g[0];
    let t = 50;
    let data = simulate(&design(model, t, 31, false)).unwrap().data;
    for s in 0..20 {
        let y = data.series(s);
        let m = y.iter().sum::<f64>() / t as f64;
        let c0: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
        let c1: f64 = y.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        assert!((c1 / c0 - rho1).abs() < 3.0 / (t as f64).sqrt(), "site {s}: {}", c1 / c0);
    }
}

#[test]
fn long_run_innovation_correlation_matches_r() {
    let model = line_model(20);
    let r = build_correlation(&model.sites, 0.3, 1.5, 0.0).unwrap().r;
    let out = simulate(&design(model, 10_002, 2, true)).unwrap();
    let u = out.innovations.unwrap();
    let mut worst: f64 = 0.0;
    for a in 0..20 {
        for b in (a + 1)..20 {
            worst = worst.max((corr(&u, a, b) - r[(a, b)]).abs());
        }
    }
    assert!(worst < 0.05, "largest deviation {worst}");
}

#[test]
fn long_run_is_stationary() {
    let t = 10_000;
    let data = simulate(&design(line_model(20), t, 8, false)).unwrap().data;
    let var = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
    };
    for s in 0..20 {
        let y = data.series(s);
        let (a, b) = (var(&y[..t / 2]), var(&y[t / 2..]));
        assert!((a - b).abs() / a.max(b) < 0.2, "site {s}: {a} vs {b}");
    }
}
