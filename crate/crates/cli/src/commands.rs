//! One function per subcommand. Each writes its files into the output
//! directory and returns a JSON summary for standard output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use smle_core::{
    canonical_partition, mle_fit, simulate, smle_fit, DiagonalVarmaModel, FitConfig, FitReport, Method, MleMode,
    ParameterPartition, SimulationDesign, SpaceTimeData,
};

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::grid::{run_grid, write_grid};
use crate::output::{
    method_name, write_estimates_long, write_json, write_mse, write_replicates, write_table1, write_timing,
};
use crate::replicates::{run_mse_curves, run_table_study, summarize, timing_rows, wall_time_ratio};

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_data(path: &Path) -> Result<SpaceTimeData, HarnessError> {
    let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    SpaceTimeData::read_csv(BufReader::new(f)).map_err(|source| HarnessError::Data {
        path: path.to_path_buf(),
        source,
    })
}

fn paths(p: &[PathBuf]) -> Vec<String> {
    p.iter().map(|x| x.display().to_string()).collect()
}

/// Simulates a design and writes `data.csv` (and `innovations.csv` when the
/// design records them).
pub fn cmd_simulate(design: &SimulationDesign, out: &Path) -> Result<Value, HarnessError> {
    let sim = simulate(design)?;
    let data_path = out.join("data.csv");
    let f = File::create(&data_path).map_err(|e| HarnessError::io(&data_path, e))?;
    sim.data.write_csv(f).map_err(|source| HarnessError::Data {
        path: data_path.clone(),
        source,
    })?;
    let mut written = vec![data_path];
    if let Some(u) = &sim.innovations {
        let p = out.join("innovations.csv");
        let f = File::create(&p).map_err(|e| HarnessError::io(&p, e))?;
        smle_core::data::write_matrix_csv(f, &sim.data.sites, u).map_err(|source| HarnessError::Data {
            path: p.clone(),
            source,
        })?;
        written.push(p);
    }
    Ok(json!({
        "command": "simulate",
        "T": design.t,
        "S": design.model.n_sites(),
        "seed": design.seed,
        "outputs": paths(&written),
    }))
}

/// How `cmd_fit` estimates the model.
#[derive(Debug, Clone, PartialEq)]
pub enum FitMethod {
    Smle(Option<ParameterPartition>),
    FullMle,
    /// Joint MLE with every scale held at the given value, or at the
    /// skeleton's values when `None`.
    FixedMle(Option<Vec<f64>>),
}

/// Fits `data` to the model skeleton and writes `fit_report.json`.
pub fn cmd_fit(
    skeleton: &DiagonalVarmaModel,
    data: &SpaceTimeData,
    method: &FitMethod,
    fit: &FitConfig,
    out: &Path,
) -> Result<(FitReport, Value), HarnessError> {
    let report = match method {
        FitMethod::Smle(part) => {
            let part = part.clone().unwrap_or_else(|| canonical_partition(skeleton));
            smle_fit(data, skeleton, &part, fit)?
        }
        FitMethod::FullMle => mle_fit(data, skeleton, &MleMode::Full, None, fit)?,
        FitMethod::FixedMle(sigma) => {
            let sigma = sigma
                .clone()
                .unwrap_or_else(|| skeleton.arma.iter().map(|a| a.sigma).collect());
            mle_fit(data, skeleton, &MleMode::FixedSigma { sigma }, None, fit)?
        }
    };
    let p = out.join("fit_report.json");
    write_json(&p, &report)?;
    let summary = json!({
        "command": "fit",
        "method": method_name(report.method),
        "complete": report.is_complete(),
        "joint_loglik": report.joint_loglik,
        "total_wall_seconds": report.total_wall_seconds,
        "outputs": paths(&[p]),
    });
    Ok((report, summary))
}

fn summary_json(cfg: &ExperimentConfig) -> Value {
    json!({ "T": cfg.t, "S": cfg.s, "replicates": cfg.replicates, "seed": cfg.seed })
}

/// Estimate table of the line study with per-replicate raw estimates.
pub fn cmd_table1(cfg: &ExperimentConfig, out: &Path) -> Result<Value, HarnessError> {
    let fits = run_table_study(cfg);
    let summaries: Vec<_> = cfg.methods.iter().filter_map(|m| summarize(&fits, *m)).collect();
    let written = vec![
        write_table1(out, &summaries, &cfg.truth)?,
        write_replicates(out, &fits)?,
        write_estimates_long(out, &fits)?,
    ];
    let rows: BTreeMap<&str, Value> = summaries
        .iter()
        .map(|s| (method_name(s.method), serde_json::to_value(s).expect("serializable")))
        .collect();
    let v = json!({
        "command": "table1",
        "design": summary_json(cfg),
        "rows": rows,
        "outputs": paths(&written),
    });
    let p = out.join("table1_summary.json");
    write_json(&p, &v)?;
    Ok(v)
}

/// Wall time and iteration table of the line study.
pub fn cmd_timing(cfg: &ExperimentConfig, out: &Path) -> Result<Value, HarnessError> {
    let fits = run_table_study(cfg);
    let rows = timing_rows(&fits, &cfg.methods);
    let written = vec![write_timing(out, &rows)?, write_replicates(out, &fits)?];
    let v = json!({
        "command": "timing",
        "design": summary_json(cfg),
        "rows": rows,
        "smle_over_full_mle_wall_time": wall_time_ratio(&rows),
        "outputs": paths(&written),
    });
    let p = out.join("timing_summary.json");
    write_json(&p, &v)?;
    Ok(v)
}

/// Bias, variance and MSE of the spatial estimates along the `T` and `S` grids.
pub fn cmd_mse_curves(cfg: &ExperimentConfig, out: &Path) -> Result<Value, HarnessError> {
    let points = run_mse_curves(cfg);
    let written = write_mse(out, &points)?;
    Ok(json!({
        "command": "mse-curves",
        "points": points,
        "outputs": paths(&written),
    }))
}

/// Three-stage fit of the synthetic grid.
pub fn cmd_grid_fit(cfg: &ExperimentConfig, out: &Path) -> Result<Value, HarnessError> {
    let run = run_grid(cfg)?;
    let written = write_grid(out, cfg, &run)?;
    let r = &run.result;
    let v = json!({
        "command": "grid-fit",
        "n_lon": cfg.grid.n_lon,
        "n_lat": cfg.grid.n_lat,
        "T": cfg.grid.t,
        "n_points": r.n_points,
        "complete": r.report.is_complete(),
        "stages": r.stages,
        "kappa_within_20pct": r.kappa_recovery(0.2),
        "trend_correlation": r.trend_correlation,
        "xi": r.xi,
        "tau": r.tau,
        "simulate_seconds": r.simulate_seconds,
        "fit_seconds": r.report.total_wall_seconds,
        "outputs": paths(&written),
    });
    let p = out.join("grid_summary.json");
    write_json(&p, &v)?;
    Ok(v)
}

/// Parses a method name as used in configuration files.
pub fn parse_method(s: &str) -> Result<Method, HarnessError> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| HarnessError::Config(format!("unknown method '{s}' (expected SMLE, FullMLE or FixedMLE)")))
}
