//! Replicated simulation studies on sites spaced one unit apart on a line:
//! estimate tables, timing, and bias/variance curves over `T` and `S`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smle_core::{
    canonical_partition, mle_fit, simulate, smle_fit, ArmaSpec, DiagonalVarmaModel, FitConfig, FitReport,
    InnovationModel, MeanModel, Method, MleMode, ParamId, SimulationDesign, SpaceTimeData,
};

use crate::config::{ExperimentConfig, TruthConfig};
use crate::error::HarnessError;

/// Derives the seed of replicate `index` in experiment `stream` (SplitMix64
/// finalizer over the combined words).
pub fn replicate_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TABLE_STREAM: u64 = 1;
const MSE_T_STREAM: u64 = 100;
const MSE_S_STREAM: u64 = 200;

/// Zero-mean AR model with Matérn innovations at sites `0, 1, ..., S-1`.
pub fn line_model(s: usize, truth: &TruthConfig) -> DiagonalVarmaModel {
    DiagonalVarmaModel {
        sites: (0..s).map(|i| vec![i as f64]).collect(),
        arma: vec![ArmaSpec::ar(0.0, truth.sigma, truth.phi.clone()); s],
        innovation: InnovationModel::IsotropicMatern {
            alpha: truth.alpha,
            kappa: truth.kappa,
        },
        mean_model: MeanModel::Fixed,
    }
}

/// One method applied to one replicate. `report` is `None` when the fit
/// returned an error, whose message is kept in `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFit {
    pub method: Method,
    pub replicate: usize,
    pub seed: u64,
    pub report: Option<FitReport>,
    pub error: Option<String>,
}

impl ReplicateFit {
    /// The report when every step succeeded.
    pub fn complete(&self) -> Option<&FitReport> {
        self.report.as_ref().filter(|r| r.is_complete())
    }
}

fn simulate_line(model: &DiagonalVarmaModel, t: usize, seed: u64) -> Result<SpaceTimeData, HarnessError> {
    Ok(simulate(&SimulationDesign {
        model: model.clone(),
        t,
        burn_in: None,
        seed,
        record_innovations: false,
    })?
    .data)
}

fn fit_one(
    method: Method,
    data: &SpaceTimeData,
    model: &DiagonalVarmaModel,
    fit: &FitConfig,
) -> Result<FitReport, String> {
    let truth = model.values();
    let r = match method {
        Method::Smle => smle_fit(data, model, &canonical_partition(model), fit),
        Method::FullMle => mle_fit(data, model, &MleMode::Full, Some(&truth), fit),
        Method::FixedMle => {
            let sigma = model.arma.iter().map(|a| a.sigma).collect();
            mle_fit(data, model, &MleMode::FixedSigma { sigma }, Some(&truth), fit)
        }
    };
    r.map_err(|e| e.to_string())
}

fn map_replicates<T, F>(n: usize, serial: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if serial {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}

/// Simulates `cfg.replicates` data sets at `(T, S)` and fits each with every
/// configured method; full joint MLE fits stop after `cfg.full_mle_replicates`
/// replicates when that cap is set. Results come back in replicate order,
/// methods in configuration order.
pub fn run_table_study(cfg: &ExperimentConfig) -> Vec<ReplicateFit> {
    run_study(cfg, cfg.t, cfg.s, &cfg.methods, cfg.replicates, TABLE_STREAM)
}

fn run_study(
    cfg: &ExperimentConfig,
    t: usize,
    s: usize,
    methods: &[Method],
    replicates: usize,
    stream: u64,
) -> Vec<ReplicateFit> {
    let model = line_model(s, &cfg.truth);
    let fit = cfg.fit_config();
    let mle_cap = cfg.full_mle_replicates.unwrap_or(usize::MAX);
    let per_rep = map_replicates(replicates, cfg.serial, |r| {
        let seed = replicate_seed(cfg.seed, stream, r as u64);
        let data = simulate_line(&model, t, seed);
        methods
            .iter()
            .filter(|m| **m != Method::FullMle || r < mle_cap)
            .map(|&method| {
                let res = data
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|d| fit_one(method, d, &model, &fit));
                let (report, error) = match res {
                    Ok(rep) => (Some(rep), None),
                    Err(e) => (None, Some(e)),
                };
                ReplicateFit {
                    method,
                    replicate: r,
                    seed,
                    report,
                    error,
                }
            })
            .collect::<Vec<_>>()
    });
    per_rep.into_iter().flatten().collect()
}

/// Mean and sample standard deviation of one table column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub n: usize,
}

/// The five estimate columns of the line study.
pub const COLUMNS: [&str; 5] = ["sigma", "phi1", "phi2", "alpha", "kappa"];

fn column_values(rep: &FitReport, column: &str) -> Vec<f64> {
    rep.estimates
        .iter()
        .filter(|(id, _)| match column {
            "sigma" => matches!(id, ParamId::Scale(_)),
            "phi1" => matches!(id, ParamId::Ar(_, 1)),
            "phi2" => matches!(id, ParamId::Ar(_, 2)),
            "alpha" => **id == ParamId::MaternAlpha,
            "kappa" => **id == ParamId::MaternKappa,
            _ => false,
        })
        .map(|(_, v)| *v)
        .collect()
}

/// Site average of one column in one report.
pub fn column_mean(rep: &FitReport, column: &str) -> Option<f64> {
    let v = column_values(rep, column);
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn mean_sd(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.len() > 1).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), sd)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub replicates: usize,
    pub failed: usize,
    /// In [`COLUMNS`] order. Site parameters pool every site of every
    /// replicate; standard deviations need at least two replicates.
    pub columns: Vec<ColumnSummary>,
}

impl MethodSummary {
    pub fn column(&self, name: &str) -> ColumnSummary {
        self.columns[COLUMNS.iter().position(|c| *c == name).expect("known column")]
    }
}

pub fn summarize(fits: &[ReplicateFit], method: Method) -> Option<MethodSummary> {
    let mine: Vec<&ReplicateFit> = fits.iter().filter(|f| f.method == method).collect();
    if mine.is_empty() {
        return None;
    }
    let ok: Vec<&FitReport> = mine.iter().filter_map(|f| f.complete()).collect();
    let columns = COLUMNS
        .iter()
        .map(|c| {
            let vals: Vec<f64> = ok.iter().flat_map(|r| column_values(r, c)).collect();
            let (mean, sd) = mean_sd(&vals);
            ColumnSummary {
                mean,
                sd: if ok.len() > 1 { sd } else { None },
                n: vals.len(),
            }
        })
        .collect();
    Some(MethodSummary {
        method,
        replicates: mine.len(),
        failed: mine.len() - ok.len(),
        columns,
    })
}

/// Wall time and iteration statistics of one row of the timing table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: Method,
    /// `step1` (all temporal steps), `step2` (innovation step) or `total`.
    pub component: String,
    pub replicates: usize,
    pub wall_mean: f64,
    pub wall_sd: Option<f64>,
    pub iterations_mean: f64,
    pub iterations_sd: Option<f64>,
}

fn stage_mean_iterations(rep: &FitReport, stage: usize) -> f64 {
    let its: Vec<f64> = rep
        .per_step
        .iter()
        .filter(|s| s.stage == stage)
        .map(|s| s.iterations as f64)
        .collect();
    its.iter().sum::<f64>() / its.len().max(1) as f64
}

/// Timing rows per method: stage rows plus a total for SMLE, a single total
/// for joint MLE. Iterations of a stage are the mean over its steps.
pub fn timing_rows(fits: &[ReplicateFit], methods: &[Method]) -> Vec<TimingRow> {
    let mut rows = Vec::new();
    for &method in methods {
        let ok: Vec<&FitReport> = fits
            .iter()
            .filter(|f| f.method == method)
            .filter_map(|f| f.complete())
            .collect();
        if ok.is_empty() {
            continue;
        }
        let mut push = |component: &str, wall: Vec<f64>, its: Vec<f64>| {
            let (wm, ws) = mean_sd(&wall);
            let (im, is) = mean_sd(&its);
            rows.push(TimingRow {
                method,
                component: component.to_string(),
                replicates: ok.len(),
                wall_mean: wm.unwrap_or(f64::NAN),
                wall_sd: ws,
                iterations_mean: im.unwrap_or(f64::NAN),
                iterations_sd: is,
            });
        };
        if method == Method::Smle {
            let stages = ok.iter().map(|r| r.stage_wall_seconds.len()).max().unwrap_or(0);
            for st in 0..stages {
                push(
                    &format!("step{}", st + 1),
                    ok.iter().map(|r| r.stage_wall_seconds.get(st).copied().unwrap_or(0.0)).collect(),
                    ok.iter().map(|r| stage_mean_iterations(r, st)).collect(),
                );
            }
            push(
                "total",
                ok.iter().map(|r| r.total_wall_seconds).collect(),
                ok.iter().map(|r| r.stagewise_mean_iterations()).collect(),
            );
        } else {
            push(
                "total",
                ok.iter().map(|r| r.total_wall_seconds).collect(),
                ok.iter().map(|r| r.total_iterations() as f64).collect(),
            );
        }
    }
    rows
}

/// Mean SMLE total wall time over mean joint-MLE wall time, when both ran.
pub fn wall_time_ratio(rows: &[TimingRow]) -> Option<f64> {
    let total = |m: Method| {
        rows.iter()
            .find(|r| r.method == m && r.component == "total")
            .map(|r| r.wall_mean)
    };
    Some(total(Method::Smle)? / total(Method::FullMle)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    T,
    S,
}

/// Bias, variance and mean square error of one spatial parameter at one
/// grid point; `mse = bias2 + variance` with the variance divided by `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsePoint {
    pub axis: Axis,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "S")]
    pub s: usize,
    pub param: String,
    pub replicates: usize,
    pub failed: usize,
    pub mean: f64,
    pub bias2: f64,
    pub variance: f64,
    pub mse: f64,
}

fn mse_point(axis: Axis, t: usize, s: usize, param: &str, truth: f64, fits: &[ReplicateFit]) -> MsePoint {
    let v: Vec<f64> = fits
        .iter()
        .filter_map(|f| f.complete())
        .filter_map(|r| column_mean(r, param))
        .collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let variance = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let bias2 = (mean - truth).powi(2);
    MsePoint {
        axis,
        t,
        s,
        param: param.to_string(),
        replicates: fits.len(),
        failed: fits.len() - v.len(),
        mean,
        bias2,
        variance,
        mse: bias2 + variance,
    }
}

/// SMLE bias/variance/MSE of `alpha` and `kappa` along both grids.
pub fn run_mse_curves(cfg: &ExperimentConfig) -> Vec<MsePoint> {
    let m = &cfg.mse;
    let mut designs: Vec<(Axis, usize, usize, u64)> = Vec::new();
    for (i, &t) in m.t_grid.iter().enumerate() {
        designs.push((Axis::T, t, m.s_fixed, MSE_T_STREAM + i as u64));
    }
    for (i, &s) in m.s_grid.iter().enumerate() {
        designs.push((Axis::S, m.t_fixed, s, MSE_S_STREAM + i as u64));
    }
    let mut out = Vec::new();
    for (axis, t, s, stream) in designs {
        let fits = run_study(cfg, t, s, &[Method::Smle], m.replicates, stream);
        out.push(mse_point(axis, t, s, "alpha", cfg.truth.alpha, &fits));
        out.push(mse_point(axis, t, s, "kappa", cfg.truth.kappa, &fits));
    }
    out
}

/// All estimates of every replicate in long form: `(method, replicate, seed,
/// parameter, value)`; fixed parameters are included.
pub fn raw_estimates(fits: &[ReplicateFit]) -> Vec<(Method, usize, u64, String, f64)> {
    let mut out = Vec::new();
    for f in fits {
        if let Some(rep) = &f.report {
            let all: BTreeMap<ParamId, f64> = rep.fixed.iter().chain(&rep.estimates).map(|(k, v)| (*k, *v)).collect();
            for (id, v) in all {
                out.push((f.method, f.replicate, f.seed, id.to_string(), v));
            }
        }
    }
    out
}
