//! Three-stage fit of a synthetic global grid: per-cell AR(2) with trend,
//! per-latitude spectral parameters, then the coherence across latitudes.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use smle_core::estimation::residual_matrix;
use smle_core::spectral::{cross_spectral_mass, CrossPeriodogram};
use smle_core::{
    canonical_partition, modified_matern_mass, simulate, smle_fit, ArmaSpec, DiagonalVarmaModel, FitReport,
    InnovationModel, MeanModel, ParamId, SimulationDesign, SpaceTimeData,
};

use crate::config::{ExperimentConfig, GridConfig};
use crate::error::HarnessError;
use crate::output::{fmt_opt, write_json};
use crate::plot::{field_panels, line_panels, Field, Panel, Series};
use crate::replicates::replicate_seed;

const GRID_STREAM: u64 = 300;

fn profile(p: [f64; 2], weight: f64) -> f64 {
    p[0] + (p[1] - p[0]) * weight
}

/// `sin^2` of the latitude fraction: 0 at both edges, 1 in the middle.
fn equator_weight(m: usize, n_lat: usize) -> f64 {
    if n_lat < 2 {
        return 1.0;
    }
    (PI * m as f64 / (n_lat - 1) as f64).sin().powi(2)
}

/// The true model: cell `(j, m)` is site `m * N + j` at coordinates `[j, m]`.
pub fn grid_model(g: &GridConfig) -> DiagonalVarmaModel {
    let (n, m_lat) = (g.n_lon, g.n_lat);
    let mut sites = Vec::with_capacity(n * m_lat);
    let mut arma = Vec::with_capacity(n * m_lat);
    for m in 0..m_lat {
        let w = equator_weight(m, m_lat);
        let z = if m_lat > 1 { m as f64 / (m_lat - 1) as f64 } else { 0.5 };
        for j in 0..n {
            let x = 2.0 * PI * j as f64 / n as f64;
            let mu = 20.0 * w - 5.0 + 2.0 * x.cos();
            let sigma = profile(g.sigma_range, 0.5 + 0.5 * x.sin() * (PI * z).cos());
            let phi1 = profile(g.phi1_range, w * (0.5 + 0.5 * (2.0 * x).cos()));
            let beta1 = profile(g.trend_range, 0.5 + 0.5 * (x + PI * z).sin());
            sites.push(vec![j as f64, m as f64]);
            arma.push(ArmaSpec::new(mu, beta1, sigma, vec![phi1, g.phi2], vec![]));
        }
    }
    DiagonalVarmaModel {
        sites,
        arma,
        innovation: InnovationModel::AxiallySymmetric {
            alpha_m: (0..m_lat).map(|m| profile(g.alpha_profile, equator_weight(m, m_lat))).collect(),
            kappa_m: (0..m_lat).map(|m| profile(g.kappa_profile, equator_weight(m, m_lat))).collect(),
            xi: g.xi,
            tau: g.tau,
            n_lon: n,
            latitudes: (0..m_lat).map(|m| m as f64).collect(),
        },
        mean_model: MeanModel::Trend,
    }
}

/// One row of the per-stage timing table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: String,
    pub wall_seconds: f64,
    pub steps: usize,
    pub params_per_model: usize,
    pub data_points_per_model: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatitudeRow {
    pub lat: usize,
    pub alpha_true: f64,
    pub alpha_hat: Option<f64>,
    pub kappa_true: f64,
    pub kappa_hat: Option<f64>,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl LatitudeRow {
    pub fn kappa_rel_error(&self) -> Option<f64> {
        self.kappa_hat.map(|k| (k - self.kappa_true).abs() / self.kappa_true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub seed: u64,
    pub n_points: usize,
    pub simulate_seconds: f64,
    pub stages: Vec<StageRow>,
    pub latitudes: Vec<LatitudeRow>,
    pub xi: (f64, Option<f64>),
    pub tau: (f64, Option<f64>),
    /// Pearson correlation between true and estimated trends over cells.
    pub trend_correlation: Option<f64>,
    pub report: FitReport,
}

impl GridResult {
    /// Fraction of latitudes whose smoothness estimate is within `rel` of
    /// the truth.
    pub fn kappa_recovery(&self, rel: f64) -> f64 {
        let ok = self
            .latitudes
            .iter()
            .filter(|l| l.kappa_rel_error().is_some_and(|e| e <= rel))
            .count();
        ok as f64 / self.latitudes.len() as f64
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Simulated data, true model and the stepwise fit of the grid study.
pub struct GridRun {
    pub truth: DiagonalVarmaModel,
    pub data: SpaceTimeData,
    pub result: GridResult,
}

pub fn run_grid(cfg: &ExperimentConfig) -> Result<GridRun, HarnessError> {
    let g = &cfg.grid;
    let truth = grid_model(g);
    let seed = replicate_seed(cfg.seed, GRID_STREAM, 0);
    let t0 = Instant::now();
    let data = simulate(&SimulationDesign {
        model: truth.clone(),
        t: g.t,
        burn_in: None,
        seed,
        record_innovations: false,
    })?
    .data;
    let simulate_seconds = t0.elapsed().as_secs_f64();
    let report = smle_fit(&data, &truth, &canonical_partition(&truth), &cfg.fit_config())?;

    let InnovationModel::AxiallySymmetric {
        alpha_m, kappa_m, xi, tau, ..
    } = &truth.innovation
    else {
        unreachable!("grid model is axially symmetric")
    };
    let est = |id: ParamId| report.estimates.get(&id).copied();
    let tp = g.t - truth.max_p();
    let names = ["Temporal", "Longitudinal", "Latitudinal"];
    let per_model = [
        (truth.temporal_params(0).len(), g.t),
        (2, g.n_lon * tp),
        (2, g.n_lon * g.n_lat * tp),
    ];
    let stages = report
        .stage_wall_seconds
        .iter()
        .enumerate()
        .map(|(k, w)| StageRow {
            stage: names.get(k).copied().unwrap_or("Extra").to_string(),
            wall_seconds: *w,
            steps: report.per_step.iter().filter(|s| s.stage == k).count(),
            params_per_model: per_model.get(k).map_or(0, |p| p.0),
            data_points_per_model: per_model.get(k).map_or(0, |p| p.1),
        })
        .collect();
    let n_cells = g.n_lon * g.n_lat;
    let latitudes = (0..g.n_lat)
        .map(|m| {
            let step = report.per_step.iter().find(|s| s.step == n_cells + m);
            LatitudeRow {
                lat: m,
                alpha_true: alpha_m[m],
                alpha_hat: est(ParamId::SpectralAlpha(m)),
                kappa_true: kappa_m[m],
                kappa_hat: est(ParamId::SpectralKappa(m)),
                iterations: step.map_or(0, |s| s.iterations),
                warnings: step.map(|s| s.warnings.clone()).unwrap_or_default(),
            }
        })
        .collect();
    let true_trend: Vec<f64> = truth.arma.iter().map(|a| a.beta1).collect();
    let est_trend: Option<Vec<f64>> = (0..n_cells).map(|s| est(ParamId::Trend(s))).collect();
    let result = GridResult {
        seed,
        n_points: n_cells * g.t,
        simulate_seconds,
        stages,
        latitudes,
        xi: (*xi, est(ParamId::CoherenceXi)),
        tau: (*tau, est(ParamId::CoherenceTau)),
        trend_correlation: est_trend.and_then(|e| pearson(&true_trend, &e)),
        report,
    };
    Ok(GridRun { truth, data, result })
}

fn write_csv_rows(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), HarnessError> {
    let f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(f));
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

/// Latitudes shown in the spectrum figure: configured, or four evenly spaced.
pub fn plot_latitudes(g: &GridConfig) -> Vec<usize> {
    if let Some(l) = &g.plot_latitudes {
        return l.clone();
    }
    let k = g.n_lat.min(4);
    if k <= 1 {
        return vec![0];
    }
    (0..k)
        .map(|i| ((i * (g.n_lat - 1)) as f64 / (k - 1) as f64).round() as usize)
        .collect()
}

/// Writes every grid-study artifact into `dir` and returns the paths.
pub fn write_grid(dir: &Path, cfg: &ExperimentConfig, run: &GridRun) -> Result<Vec<PathBuf>, HarnessError> {
    let g = &cfg.grid;
    let r = &run.result;
    let fitted = r.report.model(&run.truth);
    let mut out = Vec::new();

    let p = dir.join("grid_stage_times.csv");
    write_csv_rows(
        &p,
        &["stage", "wall_seconds", "steps", "params_per_model", "data_points_per_model"],
        r.stages
            .iter()
            .map(|s| {
                vec![
                    s.stage.clone(),
                    format!("{}", s.wall_seconds),
                    s.steps.to_string(),
                    s.params_per_model.to_string(),
                    s.data_points_per_model.to_string(),
                ]
            })
            .collect(),
    )?;
    out.push(p);

    let p = dir.join("grid_cells.csv");
    let mut rows = Vec::new();
    for (s, (t, f)) in run.truth.arma.iter().zip(&fitted.arma).enumerate() {
        let ok = |id: ParamId| r.report.estimates.contains_key(&id);
        let val = |id: ParamId, v: f64| fmt_opt(ok(id).then_some(v));
        rows.push(vec![
            (s % g.n_lon).to_string(),
            (s / g.n_lon).to_string(),
            val(ParamId::Mean(s), f.mu),
            format!("{}", t.mu),
            val(ParamId::Scale(s), f.sigma),
            format!("{}", t.sigma),
            val(ParamId::Trend(s), f.beta1),
            format!("{}", t.beta1),
            val(ParamId::Ar(s, 1), f.phi[0]),
            format!("{}", t.phi[0]),
            val(ParamId::Ar(s, 2), f.phi[1]),
            format!("{}", t.phi[1]),
        ]);
    }
    write_csv_rows(
        &p,
        &[
            "lon", "lat", "mu", "mu_true", "sigma", "sigma_true", "beta1", "beta1_true", "phi1", "phi1_true", "phi2",
            "phi2_true",
        ],
        rows,
    )?;
    out.push(p);

    let p = dir.join("grid_latitudes.csv");
    write_csv_rows(
        &p,
        &["lat", "alpha_true", "alpha_hat", "kappa_true", "kappa_hat", "kappa_rel_error", "iterations", "warnings"],
        r.latitudes
            .iter()
            .map(|l| {
                vec![
                    l.lat.to_string(),
                    format!("{}", l.alpha_true),
                    fmt_opt(l.alpha_hat),
                    format!("{}", l.kappa_true),
                    fmt_opt(l.kappa_hat),
                    fmt_opt(l.kappa_rel_error()),
                    l.iterations.to_string(),
                    l.warnings.join("; "),
                ]
            })
            .collect(),
    )?;
    out.push(p);

    let p = dir.join("grid_global.csv");
    write_csv_rows(
        &p,
        &["param", "true", "estimate"],
        vec![
            vec!["xi".into(), format!("{}", r.xi.0), fmt_opt(r.xi.1)],
            vec!["tau".into(), format!("{}", r.tau.0), fmt_opt(r.tau.1)],
        ],
    )?;
    out.push(p);

    let p = dir.join("grid_report.json");
    write_json(&p, &r.report)?;
    out.push(p);
    let p = dir.join("grid_model.json");
    write_json(&p, &run.truth)?;
    out.push(p);
    let p = dir.join("grid_data.csv");
    let f = std::fs::File::create(&p).map_err(|e| HarnessError::io(&p, e))?;
    run.data
        .write_csv(std::io::BufWriter::new(f))
        .map_err(|source| HarnessError::Data {
            path: p.clone(),
            source,
        })?;
    out.push(p);

    // Maps in the layout mean | trend over sd | AR(1).
    let map = |title: &str, get: &dyn Fn(&ArmaSpec) -> f64| Field {
        title: title.to_string(),
        values: (0..g.n_lat)
            .map(|m| (0..g.n_lon).map(|j| get(&fitted.arma[m * g.n_lon + j])).collect())
            .collect(),
    };
    let p = dir.join("grid_maps.svg");
    field_panels(
        &p,
        &[
            map("mean", &|a| a.mu),
            map("trend", &|a| a.beta1),
            map("standard deviation", &|a| a.sigma),
            map("AR(1) coefficient", &|a| a.phi[0]),
        ],
        2,
    )?;
    out.push(p);

    if r.report.is_complete() {
        out.extend(write_spectra(dir, g, run, &fitted)?);
    }
    Ok(out)
}

fn write_spectra(
    dir: &Path,
    g: &GridConfig,
    run: &GridRun,
    fitted: &DiagonalVarmaModel,
) -> Result<Vec<PathBuf>, HarnessError> {
    let InnovationModel::AxiallySymmetric {
        alpha_m,
        kappa_m,
        xi,
        tau,
        latitudes,
        ..
    } = &fitted.innovation
    else {
        unreachable!("grid model is axially symmetric")
    };
    let all: Vec<usize> = (0..fitted.n_sites()).collect();
    let u = residual_matrix(&run.data, fitted, &all).map_err(smle_core::estimation::EstimationError::from)?;
    let cp = CrossPeriodogram::new(&u, g.n_lon, g.n_lat).map_err(smle_core::estimation::EstimationError::from)?;
    let mass = |m: usize| modified_matern_mass(alpha_m[m], kappa_m[m], g.n_lon);
    let half = g.n_lon / 2;
    let mut rows = Vec::new();
    let mut top = Vec::new();
    let mut bottom = Vec::new();
    for m in plot_latitudes(g) {
        let other = if m + 1 < g.n_lat { m + 1 } else { m.saturating_sub(1) };
        let per = cp.mean_periodogram(m);
        let fm = mass(m);
        let cross = cp.mean_cross_periodogram(m, other);
        let fcross = cross_spectral_mass(&fm, &mass(other), *xi, *tau, (latitudes[m] - latitudes[other]).abs());
        for c in 0..=half {
            rows.push(vec![
                m.to_string(),
                other.to_string(),
                c.to_string(),
                format!("{}", per[c]),
                format!("{}", fm.f[c]),
                format!("{}", cross[c]),
                format!("{}", fcross[c]),
            ]);
        }
        let pts = |v: &[f64]| (0..=half).map(|c| (c as f64, v[c])).collect::<Vec<_>>();
        top.push(Panel {
            title: format!("latitude {m}"),
            x_label: "wavenumber".into(),
            y_label: "spectral mass".into(),
            series: vec![
                Series {
                    name: "periodogram".into(),
                    points: pts(&per),
                },
                Series {
                    name: "fitted".into(),
                    points: pts(&fm.f),
                },
            ],
            log_y: true,
        });
        bottom.push(Panel {
            title: format!("latitudes {m} and {other}"),
            x_label: "wavenumber".into(),
            y_label: "cross-spectral mass".into(),
            series: vec![
                Series {
                    name: "cross-periodogram".into(),
                    points: pts(&cross),
                },
                Series {
                    name: "fitted".into(),
                    points: pts(&fcross),
                },
            ],
            log_y: false,
        });
    }
    let csv_path = dir.join("grid_spectra.csv");
    write_csv_rows(
        &csv_path,
        &["lat", "lat_other", "c", "periodogram", "fitted", "cross_periodogram", "cross_fitted"],
        rows,
    )?;
    let cols = top.len();
    top.extend(bottom);
    let svg = dir.join("grid_spectra.svg");
    line_panels(&svg, &top, cols)?;
    Ok(vec![csv_path, svg])
}
