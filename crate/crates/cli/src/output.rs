//! CSV and JSON writers for experiment results. Missing values are written
//! as `NA`; floats use the shortest representation that round-trips.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use smle_core::Method;

use crate::config::TruthConfig;
use crate::error::HarnessError;
use crate::plot::{line_panels, Panel, Series};
use crate::replicates::{
    column_mean, raw_estimates, Axis, MethodSummary, MsePoint, ReplicateFit, TimingRow, COLUMNS,
};

pub fn method_name(m: Method) -> &'static str {
    match m {
        Method::Smle => "SMLE",
        Method::FullMle => "FullMLE",
        Method::FixedMle => "FixedMLE",
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => "NA".to_string(),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, HarnessError> {
    let f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// `table1.csv`: one row per method plus the true values; columns
/// `method, replicates, failed` then `<param>, <param>_sd` per parameter.
pub fn write_table1(dir: &Path, summaries: &[MethodSummary], truth: &TruthConfig) -> Result<PathBuf, HarnessError> {
    let path = dir.join("table1.csv");
    let mut w = writer(&path)?;
    let mut header = vec!["method".to_string(), "replicates".into(), "failed".into()];
    for c in COLUMNS {
        header.push(c.to_string());
        header.push(format!("{c}_sd"));
    }
    w.write_record(&header)?;
    for s in summaries {
        let mut row = vec![method_name(s.method).to_string(), s.replicates.to_string(), s.failed.to_string()];
        for c in &s.columns {
            row.push(fmt_opt(c.mean));
            row.push(fmt_opt(c.sd));
        }
        w.write_record(&row)?;
    }
    let truth_vals = [
        truth.sigma,
        truth.phi.first().copied().unwrap_or(0.0),
        truth.phi.get(1).copied().unwrap_or(0.0),
        truth.alpha,
        truth.kappa,
    ];
    let mut row = vec!["True".to_string(), "NA".into(), "NA".into()];
    for v in truth_vals {
        row.push(format!("{v}"));
        row.push("NA".into());
    }
    w.write_record(&row)?;
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

/// `replicates.csv`: per-replicate site-averaged estimates and fit status.
pub fn write_replicates(dir: &Path, fits: &[ReplicateFit]) -> Result<PathBuf, HarnessError> {
    let path = dir.join("replicates.csv");
    let mut w = writer(&path)?;
    let mut header = vec!["method", "replicate", "seed", "status"];
    header.extend(COLUMNS);
    header.extend(["iterations", "wall_seconds", "joint_loglik", "error"]);
    w.write_record(&header)?;
    for f in fits {
        let status = match (&f.report, f.complete()) {
            (_, Some(_)) => "ok",
            (Some(_), None) => "incomplete",
            (None, _) => "failed",
        };
        let mut row = vec![
            method_name(f.method).to_string(),
            f.replicate.to_string(),
            f.seed.to_string(),
            status.to_string(),
        ];
        for c in COLUMNS {
            row.push(fmt_opt(f.report.as_ref().and_then(|r| column_mean(r, c))));
        }
        match &f.report {
            Some(r) => {
                row.push(r.total_iterations().to_string());
                row.push(format!("{}", r.total_wall_seconds));
                row.push(fmt_opt(r.joint_loglik));
            }
            None => row.extend(["NA".to_string(), "NA".into(), "NA".into()]),
        }
        row.push(f.error.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

/// `estimates_long.csv`: every parameter of every replicate fit.
pub fn write_estimates_long(dir: &Path, fits: &[ReplicateFit]) -> Result<PathBuf, HarnessError> {
    let path = dir.join("estimates_long.csv");
    let mut w = writer(&path)?;
    w.write_record(["method", "replicate", "seed", "param", "value"])?;
    for (m, r, seed, id, v) in raw_estimates(fits) {
        w.write_record([method_name(m).to_string(), r.to_string(), seed.to_string(), id, format!("{v}")])?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

/// `timing.csv`: `method, component, replicates, wall_mean, wall_sd,
/// iterations_mean, iterations_sd`.
pub fn write_timing(dir: &Path, rows: &[TimingRow]) -> Result<PathBuf, HarnessError> {
    let path = dir.join("timing.csv");
    let mut w = writer(&path)?;
    w.write_record([
        "method",
        "component",
        "replicates",
        "wall_mean",
        "wall_sd",
        "iterations_mean",
        "iterations_sd",
    ])?;
    for r in rows {
        w.write_record([
            method_name(r.method).to_string(),
            r.component.clone(),
            r.replicates.to_string(),
            fmt_opt(Some(r.wall_mean)),
            fmt_opt(r.wall_sd),
            fmt_opt(Some(r.iterations_mean)),
            fmt_opt(r.iterations_sd),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

fn axis_name(a: Axis) -> &'static str {
    match a {
        Axis::T => "T",
        Axis::S => "S",
    }
}

/// `mse_curves.csv` plus `mse_vs_T.svg` and `mse_vs_S.svg`.
pub fn write_mse(dir: &Path, points: &[MsePoint]) -> Result<Vec<PathBuf>, HarnessError> {
    let path = dir.join("mse_curves.csv");
    let mut w = writer(&path)?;
    w.write_record([
        "axis", "T", "S", "param", "replicates", "failed", "mean", "bias2", "variance", "mse",
    ])?;
    for p in points {
        w.write_record([
            axis_name(p.axis).to_string(),
            p.t.to_string(),
            p.s.to_string(),
            p.param.clone(),
            p.replicates.to_string(),
            p.failed.to_string(),
            fmt_opt(Some(p.mean)),
            fmt_opt(Some(p.bias2)),
            fmt_opt(Some(p.variance)),
            fmt_opt(Some(p.mse)),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    let mut out = vec![path];

    for axis in [Axis::T, Axis::S] {
        let panels: Vec<Panel> = ["alpha", "kappa"]
            .iter()
            .map(|param| {
                let pts: Vec<&MsePoint> = points.iter().filter(|p| p.axis == axis && p.param == *param).collect();
                let x = |p: &MsePoint| if axis == Axis::T { p.t as f64 } else { p.s as f64 };
                let fixed = pts
                    .first()
                    .map(|p| if axis == Axis::T { format!("S = {}", p.s) } else { format!("T = {}", p.t) })
                    .unwrap_or_default();
                Panel {
                    title: format!("{param} ({fixed})"),
                    x_label: axis_name(axis).to_string(),
                    y_label: String::new(),
                    series: vec![
                        Series {
                            name: "bias^2".into(),
                            points: pts.iter().map(|p| (x(p), p.bias2)).collect(),
                        },
                        Series {
                            name: "variance".into(),
                            points: pts.iter().map(|p| (x(p), p.variance)).collect(),
                        },
                        Series {
                            name: "MSE".into(),
                            points: pts.iter().map(|p| (x(p), p.mse)).collect(),
                        },
                    ],
                    log_y: true,
                }
            })
            .collect();
        let svg = dir.join(format!("mse_vs_{}.svg", axis_name(axis)));
        line_panels(&svg, &panels, 2)?;
        out.push(svg);
    }
    Ok(out)
}
