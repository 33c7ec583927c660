use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use smle_cli::commands::{
    cmd_fit, cmd_grid_fit, cmd_mse_curves, cmd_simulate, cmd_table1, cmd_timing, parse_method, read_data, read_json,
    FitMethod,
};
use smle_cli::{ExperimentConfig, HarnessError};
use smle_core::{FitConfig, Method, SimulationDesign};

/// Stepwise maximum likelihood for diagonal VARMA models: simulation,
/// fitting and benchmark studies.
#[derive(Debug, Parser)]
#[command(name = "smle", version)]
struct Cli {
    /// JSON configuration: a simulation design for `simulate`, fit settings
    /// for `fit`, an experiment configuration otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Size of the worker pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run replicates and estimation steps one after another.
    #[arg(long, global = true)]
    serial: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate data from a design and write it as CSV.
    Simulate,
    /// Fit a model skeleton to a data CSV and write the fit report.
    Fit {
        /// Model skeleton JSON; its parameter values are starting points.
        #[arg(long)]
        model: PathBuf,
        /// Data CSV: a header of site coordinates, then one row per time point.
        #[arg(long)]
        data: PathBuf,
        /// Parameter partition JSON; the canonical partition by default.
        #[arg(long)]
        partition: Option<PathBuf>,
        /// SMLE, FullMLE or FixedMLE.
        #[arg(long, default_value = "SMLE")]
        method: String,
        /// Scales held fixed by FixedMLE (comma separated); the skeleton's
        /// values by default.
        #[arg(long, value_delimiter = ',')]
        sigma: Option<Vec<f64>>,
    },
    /// Estimate table of the replicated line study.
    Table1,
    /// Wall time and iteration table of the replicated line study.
    Timing,
    /// Bias, variance and MSE of the spatial estimates over T and S.
    MseCurves,
    /// Three-stage fit of a synthetic global grid.
    GridFit,
}

fn out_dir(path: Option<&Path>, default: &Path) -> Result<PathBuf, HarnessError> {
    let p = path.unwrap_or(default).to_path_buf();
    std::fs::create_dir_all(&p).map_err(|e| HarnessError::io(&p, e))?;
    Ok(p)
}

fn run(cli: Cli) -> Result<Value, HarnessError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(HarnessError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Simulate => {
            let path = cli
                .config
                .as_deref()
                .ok_or_else(|| HarnessError::Config("simulate needs --config <design.json>".into()))?;
            let mut design: SimulationDesign = read_json(path)?;
            if let Some(s) = cli.seed {
                design.seed = s;
            }
            let out = out_dir(cli.out.as_deref(), Path::new("out"))?;
            cmd_simulate(&design, &out)
        }
        Command::Fit {
            model,
            data,
            partition,
            method,
            sigma,
        } => {
            let mut fit: FitConfig = match &cli.config {
                Some(p) => read_json(p)?,
                None => FitConfig::default(),
            };
            fit.serial = cli.serial;
            if let Some(s) = cli.seed {
                fit.optimizer.seed = s;
            }
            let skeleton = read_json(model)?;
            let data = read_data(data)?;
            let method = match parse_method(method)? {
                Method::Smle => FitMethod::Smle(partition.as_deref().map(read_json).transpose()?),
                Method::FullMle => FitMethod::FullMle,
                Method::FixedMle => FitMethod::FixedMle(sigma.clone()),
            };
            let out = out_dir(cli.out.as_deref(), Path::new("out"))?;
            Ok(cmd_fit(&skeleton, &data, &method, &fit, &out)?.1)
        }
        Command::Table1 | Command::Timing | Command::MseCurves | Command::GridFit => {
            let mut cfg = match &cli.config {
                Some(p) => ExperimentConfig::from_file(p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(o) = &cli.out {
                cfg.out = o.clone();
            }
            cfg.threads = cli.threads.or(cfg.threads);
            cfg.serial |= cli.serial;
            cfg.validate()?;
            if cli.threads.is_none() {
                if let Some(n) = cfg.threads {
                    // Ignore failure: a pool may already exist in this process.
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
            let out = cfg.prepare_out()?;
            log::info!("writing to {}", out.display());
            match cli.command {
                Command::Table1 => cmd_table1(&cfg, &out),
                Command::Timing => cmd_timing(&cfg, &out),
                Command::MseCurves => cmd_mse_curves(&cfg, &out),
                _ => cmd_grid_fit(&cfg, &out),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let v = json!({ "error": { "kind": "usage", "message": e.to_string().trim() } });
            eprintln!("{v}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
