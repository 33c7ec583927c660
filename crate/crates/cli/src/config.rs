//! Experiment configuration, read from JSON. Every field has a default, so
//! `{}` is a valid configuration describing the line-of-sites study.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smle_core::{FitConfig, Method};

use crate::error::HarnessError;

/// True parameter values shared by every site of the line study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthConfig {
    pub sigma: f64,
    pub phi: Vec<f64>,
    pub alpha: f64,
    pub kappa: f64,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self {
            sigma: 1.2,
            phi: vec![0.5, 0.25],
            alpha: 0.3,
            kappa: 1.5,
        }
    }
}

/// Grids for the consistency curves: `T` varies with `S = s_fixed`, and `S`
/// varies with `T = t_fixed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MseConfig {
    pub t_grid: Vec<usize>,
    pub s_fixed: usize,
    pub s_grid: Vec<usize>,
    pub t_fixed: usize,
    /// Replicates per grid point.
    pub replicates: usize,
}

impl Default for MseConfig {
    fn default() -> Self {
        Self {
            t_grid: vec![20, 40, 60, 80, 100],
            s_fixed: 20,
            s_grid: vec![10, 20, 30, 45],
            t_fixed: 100,
            replicates: 30,
        }
    }
}

/// Synthetic global grid: AR(2) with a linear trend in every cell and
/// axially symmetric innovations. Latitude profiles interpolate between the
/// `[pole, equator]` pairs with `sin^2` of the latitude index fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n_lon: usize,
    pub n_lat: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub alpha_profile: [f64; 2],
    pub kappa_profile: [f64; 2],
    pub xi: f64,
    pub tau: f64,
    pub sigma_range: [f64; 2],
    pub phi1_range: [f64; 2],
    pub phi2: f64,
    pub trend_range: [f64; 2],
    /// Latitudes shown in the spectrum plots; `None` picks four evenly
    /// spaced ones.
    pub plot_latitudes: Option<Vec<usize>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_lon: 48,
            n_lat: 24,
            t: 95,
            alpha_profile: [0.25, 0.6],
            kappa_profile: [1.8, 0.9],
            xi: 0.8,
            tau: 0.4,
            sigma_range: [0.4, 1.2],
            phi1_range: [0.2, 0.6],
            phi2: 0.1,
            trend_range: [0.005, 0.06],
            plot_latitudes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "S")]
    pub s: usize,
    pub truth: TruthConfig,
    pub replicates: usize,
    /// Caps the replicates fitted by full joint MLE (the other methods fit
    /// all of them); `None` fits all.
    pub full_mle_replicates: Option<usize>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub mse: MseConfig,
    pub grid: GridConfig,
    pub fit: FitConfig,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub serial: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            t: 50,
            s: 20,
            truth: TruthConfig::default(),
            replicates: 30,
            full_mle_replicates: None,
            methods: vec![Method::Smle],
            seed: 20_240_601,
            mse: MseConfig::default(),
            grid: GridConfig::default(),
            fit: FitConfig::default(),
            out: PathBuf::from("out"),
            threads: None,
            serial: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.full_mle_replicates == Some(0) {
            return bad("full_mle_replicates must be at least 1 when given".into());
        }
        if self.t < 2 || self.s < 1 {
            return bad(format!("need T >= 2 and S >= 1, got T = {}, S = {}", self.t, self.s));
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return bad(format!("method {m:?} listed twice"));
            }
        }
        let tr = &self.truth;
        if !(tr.sigma > 0.0 && tr.alpha > 0.0 && tr.kappa > 0.0) {
            return bad("sigma, alpha and kappa must be positive".into());
        }
        if !smle_core::model::is_stationary(&tr.phi) {
            return bad(format!("AR coefficients {:?} are not stationary", tr.phi));
        }
        self.validate_mse()?;
        self.validate_grid()?;
        self.fit.optimizer.validate().map_err(HarnessError::Config)?;
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    fn validate_mse(&self) -> Result<(), HarnessError> {
        let m = &self.mse;
        if m.replicates == 0 {
            return Err(HarnessError::Config(
                "every consistency grid point needs at least 1 replicate".into(),
            ));
        }
        for (name, g) in [("t_grid", &m.t_grid), ("s_grid", &m.s_grid)] {
            if g.is_empty() {
                return Err(HarnessError::Config(format!("mse.{name} must not be empty")));
            }
            if g.windows(2).any(|w| w[0] >= w[1]) {
                return Err(HarnessError::Config(format!("mse.{name} must be strictly increasing")));
            }
        }
        if m.t_grid[0] < 2 || m.t_fixed < 2 || m.s_grid[0] < 1 || m.s_fixed < 1 {
            return Err(HarnessError::Config("consistency grid sizes are too small".into()));
        }
        Ok(())
    }

    fn validate_grid(&self) -> Result<(), HarnessError> {
        let g = &self.grid;
        let bad = |m: &str| Err(HarnessError::Config(format!("grid: {m}")));
        if g.n_lon < 4 || g.n_lat < 1 || g.t < 10 {
            return bad("need n_lon >= 4, n_lat >= 1 and T >= 10");
        }
        if !(g.xi > 0.0 && g.xi < 1.0 && g.tau >= 0.0) {
            return bad("need 0 < xi < 1 and tau >= 0");
        }
        let positive = |p: &[f64; 2]| p[0] > 0.0 && p[1] > 0.0;
        if !positive(&g.alpha_profile) || !positive(&g.kappa_profile) || !positive(&g.sigma_range) {
            return bad("alpha, kappa and sigma profiles must be positive");
        }
        if !g
            .phi1_range
            .iter()
            .all(|p1| smle_core::model::is_stationary(&[*p1, g.phi2]))
        {
            return bad("AR(2) coefficients are not stationary over phi1_range");
        }
        if let Some(lats) = &g.plot_latitudes {
            if lats.iter().any(|m| *m >= g.n_lat) {
                return bad("plot_latitudes out of range");
            }
        }
        Ok(())
    }

    /// Output directory, created if needed, checked for writability.
    pub fn prepare_out(&self) -> Result<PathBuf, HarnessError> {
        fs::create_dir_all(&self.out).map_err(|e| HarnessError::io(&self.out, e))?;
        let probe = self.out.join(".write-test");
        fs::write(&probe, b"").map_err(|e| HarnessError::io(&probe, e))?;
        let _ = fs::remove_file(&probe);
        Ok(self.out.clone())
    }

    /// Fit settings with the scheduling switch applied.
    pub fn fit_config(&self) -> FitConfig {
        let mut f = self.fit.clone();
        f.serial = self.serial;
        f
    }
}
