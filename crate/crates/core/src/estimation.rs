//! Stepwise maximum likelihood over a parameter partition, and joint
//! maximum likelihood on the innovation-form likelihood for comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arma::{arma_residuals, fit_arma, ArmaError, ArmaFitOptions, MeanTerm};
use crate::data::SpaceTimeData;
use crate::linalg::cholesky;
use crate::matern::{
    build_correlation, fit_innovation_matern, innovation_loglik, sample_correlation,
    CorrelationMatrixFactor, MaternError,
};
use crate::model::{
    validate_partition, ArmaSpec, DiagonalVarmaModel, InnovationModel, MeanModel,
    ModelError, ParamId, ParameterPartition, PartitionError, PartitionStep,
};
use crate::optim::{nelder_mead_with_steps, OptimError, OptimizerConfig};
use crate::spectral::{
    coherence_loglik, fit_coherence, fit_whittle, modified_matern_mass, CrossPeriodogram,
    SpectralError, SpectralMass,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("invalid partition: {0}")]
    Partition(#[from] PartitionError),
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
    #[error("data has {data} sites, model has {model}")]
    SiteCount { data: usize, model: usize },
    #[error("data site {site} has coordinates {data:?}, model expects {model:?}")]
    SiteCoordinates {
        site: usize,
        data: Vec<f64>,
        model: Vec<f64>,
    },
    #[error("step {step}: {reason}")]
    UnsupportedStep { step: usize, reason: String },
    #[error("{count} free parameters exceed the joint-likelihood cap of {cap}")]
    ParameterCap { count: usize, cap: usize },
    #[error("joint maximum likelihood is not available for this model: {0}")]
    Unsupported(String),
    #[error("{0}")]
    Arma(#[from] ArmaError),
    #[error("{0}")]
    Matern(#[from] MaternError),
    #[error("{0}")]
    Spectral(#[from] SpectralError),
    #[error("optimizer: {0}")]
    Optimizer(#[from] OptimError),
    #[error("missing value for parameter {0}")]
    MissingParameter(ParamId),
    #[error("fixed sigma vector has length {found}, model has {expected} sites")]
    SigmaLength { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SMLE")]
    Smle,
    #[serde(rename = "FullMLE")]
    FullMle,
    #[serde(rename = "FixedMLE")]
    FixedMle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StepStatus {
    Ok,
    Failed { message: String },
    /// Not run because a step it depends on failed.
    Skipped { failed_dependency: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub stage: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub wall_seconds: f64,
    pub loglik: Option<f64>,
    pub converged: bool,
    #[serde(flatten)]
    pub status: StepStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: Method,
    pub estimates: BTreeMap<ParamId, f64>,
    /// Parameters held at supplied values (fixed-sigma fits).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fixed: BTreeMap<ParamId, f64>,
    pub per_step: Vec<StepReport>,
    pub stage_wall_seconds: Vec<f64>,
    pub total_wall_seconds: f64,
    /// Joint innovation-form log-likelihood at the estimates.
    pub joint_loglik: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn is_complete(&self) -> bool {
        self.per_step.iter().all(|s| s.status == StepStatus::Ok)
    }

    pub fn total_iterations(&self) -> usize {
        self.per_step.iter().map(|s| s.iterations).sum()
    }

    /// Sum over stages of the mean iteration count of the stage's steps.
    pub fn stagewise_mean_iterations(&self) -> f64 {
        let mut by_stage: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for s in &self.per_step {
            let e = by_stage.entry(s.stage).or_default();
            e.0 += s.iterations;
            e.1 += 1;
        }
        by_stage.values().map(|(it, n)| *it as f64 / *n as f64).sum()
    }

    /// The fitted model: `skeleton` with every estimated or fixed value applied.
    pub fn model(&self, skeleton: &DiagonalVarmaModel) -> DiagonalVarmaModel {
        skeleton.with_values(&self.fixed).with_values(&self.estimates)
    }

    /// Estimates with wall times zeroed, for determinism comparisons.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.total_wall_seconds = 0.0;
        r.stage_wall_seconds.iter_mut().for_each(|v| *v = 0.0);
        r.per_step.iter_mut().for_each(|s| s.wall_seconds = 0.0);
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub optimizer: OptimizerConfig,
    /// Run the steps of a stage one after another instead of concurrently.
    pub serial: bool,
    /// Diagonal jitter added to Matérn correlation matrices.
    pub jitter: f64,
    /// Largest number of free parameters accepted by [`mle_fit`].
    pub mle_param_cap: usize,
    pub mle_max_iters: usize,
    /// Use dimension-adaptive simplex coefficients for [`mle_fit`].
    pub mle_adaptive: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            serial: false,
            jitter: 0.0,
            mle_param_cap: 100,
            mle_max_iters: 250_000,
            mle_adaptive: true,
        }
    }
}

fn check_data(data: &SpaceTimeData, model: &DiagonalVarmaModel) -> Result<(), EstimationError> {
    if data.n_sites() != model.n_sites() {
        return Err(EstimationError::SiteCount {
            data: data.n_sites(),
            model: model.n_sites(),
        });
    }
    for (s, (a, b)) in data.sites.iter().zip(&model.sites).enumerate() {
        if a != b {
            return Err(EstimationError::SiteCoordinates {
                site: s,
                data: a.clone(),
                model: b.clone(),
            });
        }
    }
    Ok(())
}

fn mean_term(model: &DiagonalVarmaModel, site: usize) -> MeanTerm {
    let spec = &model.arma[site];
    match model.mean_model {
        MeanModel::Fixed => MeanTerm::Fixed {
            mu: spec.mu,
            beta1: spec.beta1,
        },
        MeanModel::Constant => MeanTerm::Constant,
        MeanModel::Trend => MeanTerm::Trend,
    }
}

fn spec_value(spec: &ArmaSpec, id: ParamId) -> Option<f64> {
    match id {
        ParamId::Mean(_) => Some(spec.mu),
        ParamId::Trend(_) => Some(spec.beta1),
        ParamId::Scale(_) => Some(spec.sigma),
        ParamId::Ar(_, i) => spec.phi.get(i - 1).copied(),
        ParamId::Ma(_, j) => spec.pi_ma.get(j - 1).copied(),
        _ => None,
    }
}

/// Conditional residuals of the given sites, aligned to the common length
/// `T - max_s p_s` over all sites of the model (`T' x sites.len()`).
pub fn residual_matrix(
    data: &SpaceTimeData,
    model: &DiagonalVarmaModel,
    sites: &[usize],
) -> Result<DMatrix<f64>, ArmaError> {
    let t = data.n_times();
    let tp = t.saturating_sub(model.max_p());
    let mut u = DMatrix::zeros(tp, sites.len());
    for (col, &s) in sites.iter().enumerate() {
        let r = arma_residuals(&data.series(s), &model.arma[s])?;
        let off = r.len() - tp;
        for i in 0..tp {
            u[(i, col)] = r[off + i];
        }
    }
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum StepKind {
    Temporal(usize),
    Matern,
    Dense,
    Whittle(usize),
    Coherence,
}

fn classify(k: usize, step: &PartitionStep, model: &DiagonalVarmaModel) -> Result<StepKind, EstimationError> {
    let unsupported = |reason: &str| EstimationError::UnsupportedStep {
        step: k,
        reason: reason.to_string(),
    };
    let set = |v: Vec<ParamId>| -> BTreeSet<ParamId> { v.into_iter().collect() };
    let all_temporal = |sites: &mut dyn Iterator<Item = usize>| -> Result<(), EstimationError> {
        for s in sites {
            for p in model.temporal_params(s) {
                if !step.nuisance.contains(&p) {
                    return Err(EstimationError::UnsupportedStep {
                        step: k,
                        reason: format!("residuals need {p} among the nuisance parameters"),
                    });
                }
            }
        }
        Ok(())
    };

    let first = *step.primary.iter().next().expect("validated: primary nonempty");
    if let Some(site) = first.site() {
        if step.primary != set(model.temporal_params(site)) {
            return Err(unsupported(
                "a temporal step must hold exactly the temporal parameters of one site",
            ));
        }
        return Ok(StepKind::Temporal(site));
    }
    match (&model.innovation, first) {
        (InnovationModel::IsotropicMatern { .. }, _) => {
            all_temporal(&mut (0..model.n_sites()))?;
            Ok(StepKind::Matern)
        }
        (InnovationModel::DenseCorrelation { .. }, _) => {
            if step.primary != set(model.innovation_params()) {
                return Err(unsupported("correlation entries must be estimated in one step"));
            }
            all_temporal(&mut (0..model.n_sites()))?;
            Ok(StepKind::Dense)
        }
        (InnovationModel::AxiallySymmetric { n_lon, latitudes, .. }, ParamId::SpectralAlpha(m))
        | (InnovationModel::AxiallySymmetric { n_lon, latitudes, .. }, ParamId::SpectralKappa(m)) => {
            if step.primary != [ParamId::SpectralAlpha(m), ParamId::SpectralKappa(m)].into() {
                return Err(unsupported("a spectral step must hold alpha_m and kappa_m of one latitude"));
            }
            let _ = latitudes;
            all_temporal(&mut (m * n_lon..(m + 1) * n_lon))?;
            Ok(StepKind::Whittle(m))
        }
        (InnovationModel::AxiallySymmetric { latitudes, .. }, _) => {
            if step.primary != [ParamId::CoherenceXi, ParamId::CoherenceTau].into() {
                return Err(unsupported("the coherence step must hold exactly xi and tau"));
            }
            all_temporal(&mut (0..model.n_sites()))?;
            for m in 0..latitudes.len() {
                for p in [ParamId::SpectralAlpha(m), ParamId::SpectralKappa(m)] {
                    if !step.nuisance.contains(&p) {
                        return Err(unsupported(&format!("coherence needs {p} as a nuisance parameter")));
                    }
                }
            }
            Ok(StepKind::Coherence)
        }
    }
}

struct StepOutcome {
    values: BTreeMap<ParamId, f64>,
    iterations: usize,
    evaluations: usize,
    loglik: Option<f64>,
    converged: bool,
    warnings: Vec<String>,
}

fn run_step(
    kind: StepKind,
    data: &SpaceTimeData,
    skeleton: &DiagonalVarmaModel,
    known: &BTreeMap<ParamId, f64>,
    cfg: &FitConfig,
) -> Result<StepOutcome, EstimationError> {
    let model = skeleton.with_values(known);
    let opt = &cfg.optimizer;
    match kind {
        StepKind::Temporal(site) => {
            let spec = &model.arma[site];
            let opts = ArmaFitOptions {
                p: spec.p,
                q: spec.q,
                mean: mean_term(&model, site),
            };
            let fit = fit_arma(&data.series(site), &opts, opt)?;
            let values = model
                .temporal_params(site)
                .into_iter()
                .map(|id| (id, spec_value(&fit.spec, id).expect("temporal parameter")))
                .collect();
            let mut warnings = Vec::new();
            if fit.sigma_at_floor {
                warnings.push(format!("site {site}: sigma collapsed to its lower bound"));
            }
            Ok(StepOutcome {
                values,
                iterations: fit.iterations,
                evaluations: fit.evaluations,
                loglik: Some(fit.loglik),
                converged: fit.converged,
                warnings,
            })
        }
        StepKind::Matern => {
            let all: Vec<usize> = (0..model.n_sites()).collect();
            let u = residual_matrix(data, &model, &all)?;
            let fit = fit_innovation_matern(&u, &model.sites, opt)?;
            Ok(StepOutcome {
                values: [(ParamId::MaternAlpha, fit.alpha), (ParamId::MaternKappa, fit.kappa)].into(),
                iterations: fit.iterations,
                evaluations: fit.evaluations,
                loglik: Some(fit.loglik),
                converged: fit.converged,
                warnings: fit.warnings,
            })
        }
        StepKind::Dense => {
            let all: Vec<usize> = (0..model.n_sites()).collect();
            let u = residual_matrix(data, &model, &all)?;
            let r = sample_correlation(&u);
            let factor = CorrelationMatrixFactor::new(r.clone())?;
            let ll = innovation_loglik(&u, &factor)?;
            let values = model
                .innovation_params()
                .into_iter()
                .map(|id| match id {
                    ParamId::Corr(i, j) => (id, r[(i, j)]),
                    _ => unreachable!("dense model has only correlation entries"),
                })
                .collect();
            Ok(StepOutcome {
                values,
                iterations: 0,
                evaluations: 1,
                loglik: Some(ll),
                converged: true,
                warnings: Vec::new(),
            })
        }
        StepKind::Whittle(m) => {
            let n_lon = match &model.innovation {
                InnovationModel::AxiallySymmetric { n_lon, .. } => *n_lon,
                _ => unreachable!("classified as spectral"),
            };
            let ring: Vec<usize> = (m * n_lon..(m + 1) * n_lon).collect();
            let u = residual_matrix(data, &model, &ring)?;
            let fit = fit_whittle(&u, opt)?;
            Ok(StepOutcome {
                values: [
                    (ParamId::SpectralAlpha(m), fit.alpha),
                    (ParamId::SpectralKappa(m), fit.kappa),
                ]
                .into(),
                iterations: fit.iterations,
                evaluations: fit.evaluations,
                loglik: Some(fit.loglik),
                converged: fit.converged,
                warnings: fit.warnings,
            })
        }
        StepKind::Coherence => {
            let InnovationModel::AxiallySymmetric {
                alpha_m,
                kappa_m,
                n_lon,
                latitudes,
                ..
            } = &model.innovation
            else {
                unreachable!("classified as coherence")
            };
            let all: Vec<usize> = (0..model.n_sites()).collect();
            let u = residual_matrix(data, &model, &all)?;
            let cp = CrossPeriodogram::new(&u, *n_lon, latitudes.len())?;
            let masses = axial_masses(alpha_m, kappa_m, *n_lon);
            let fit = fit_coherence(&cp, &masses, latitudes, opt)?;
            Ok(StepOutcome {
                values: [(ParamId::CoherenceXi, fit.xi), (ParamId::CoherenceTau, fit.tau)].into(),
                iterations: fit.iterations,
                evaluations: fit.evaluations,
                loglik: Some(fit.loglik),
                converged: fit.converged,
                warnings: fit.warnings,
            })
        }
    }
}

fn axial_masses(alpha_m: &[f64], kappa_m: &[f64], n_lon: usize) -> Vec<SpectralMass> {
    alpha_m
        .iter()
        .zip(kappa_m)
        .map(|(a, k)| modified_matern_mass(*a, *k, n_lon))
        .collect()
}

/// Runs the partition's steps stage by stage. Within a stage the steps run
/// concurrently unless `cfg.serial`; results are merged in step order, so
/// the estimates do not depend on scheduling.
///
/// A step whose optimizer fails is reported as failed and every later step
/// that uses one of its parameters is skipped; the report is still returned.
pub fn smle_fit(
    data: &SpaceTimeData,
    skeleton: &DiagonalVarmaModel,
    part: &ParameterPartition,
    cfg: &FitConfig,
) -> Result<FitReport, EstimationError> {
    check_data(data, skeleton)?;
    let schedule = validate_partition(part, skeleton)?;
    let kinds = part
        .steps
        .iter()
        .enumerate()
        .map(|(k, st)| classify(k, st, skeleton))
        .collect::<Result<Vec<_>, _>>()?;

    let start = Instant::now();
    let mut estimates: BTreeMap<ParamId, f64> = BTreeMap::new();
    let mut failed_owner: BTreeMap<ParamId, usize> = BTreeMap::new();
    let mut per_step: Vec<Option<StepReport>> = vec![None; part.steps.len()];
    let mut stage_wall = Vec::with_capacity(schedule.stages.len());

    for (stage_idx, stage) in schedule.stages.iter().enumerate() {
        let stage_start = Instant::now();
        let known = &estimates;
        let failed = &failed_owner;
        let run = |&k: &usize| -> (usize, Result<StepOutcome, String>, f64) {
            let step = &part.steps[k];
            if let Some(dep) = step.nuisance.iter().find_map(|p| failed.get(p)) {
                return (k, Err(format!("dependency:{dep}")), 0.0);
            }
            let t0 = Instant::now();
            let r = run_step(kinds[k], data, skeleton, known, cfg).map_err(|e| e.to_string());
            (k, r, t0.elapsed().as_secs_f64())
        };
        let results: Vec<_> = if cfg.serial {
            stage.iter().map(run).collect()
        } else {
            stage.par_iter().map(run).collect()
        };
        for (k, res, wall) in results {
            let report = match res {
                Ok(out) => {
                    estimates.extend(out.values);
                    StepReport {
                        step: k,
                        stage: stage_idx,
                        iterations: out.iterations,
                        evaluations: out.evaluations,
                        wall_seconds: wall,
                        loglik: out.loglik,
                        converged: out.converged,
                        status: StepStatus::Ok,
                        warnings: out.warnings,
                    }
                }
                Err(msg) => {
                    for p in &part.steps[k].primary {
                        failed_owner.insert(*p, k);
                    }
                    let status = match msg.strip_prefix("dependency:") {
                        Some(dep) => StepStatus::Skipped {
                            failed_dependency: dep.parse().expect("step index"),
                        },
                        None => StepStatus::Failed { message: msg },
                    };
                    StepReport {
                        step: k,
                        stage: stage_idx,
                        iterations: 0,
                        evaluations: 0,
                        wall_seconds: wall,
                        loglik: None,
                        converged: false,
                        status,
                        warnings: Vec::new(),
                    }
                }
            };
            per_step[k] = Some(report);
        }
        stage_wall.push(stage_start.elapsed().as_secs_f64());
    }
    let total = start.elapsed().as_secs_f64();

    let per_step: Vec<StepReport> = per_step.into_iter().map(|r| r.expect("every step ran")).collect();
    let complete = failed_owner.is_empty();
    let joint_loglik = if complete {
        joint_conditional_loglik(data, &skeleton.with_values(&estimates))
            .ok()
            .filter(|v| v.is_finite())
    } else {
        None
    };
    Ok(FitReport {
        method: Method::Smle,
        estimates,
        fixed: BTreeMap::new(),
        per_step,
        stage_wall_seconds: stage_wall,
        total_wall_seconds: total,
        joint_loglik,
        warnings: schedule.warnings,
    })
}

/// Innovation-form joint log-likelihood: the innovation density of the
/// aligned residual vectors minus `T' sum_s ln sigma_s`. Returns `-inf` for
/// a non-stationary or non-invertible proposal or a non-positive scale.
pub fn joint_conditional_loglik(data: &SpaceTimeData, model: &DiagonalVarmaModel) -> Result<f64, EstimationError> {
    check_data(data, model)?;
    if model
        .arma
        .iter()
        .any(|a| !(a.sigma > 0.0) || !a.is_stationary() || !a.is_invertible())
    {
        return Ok(f64::NEG_INFINITY);
    }
    let all: Vec<usize> = (0..model.n_sites()).collect();
    let u = residual_matrix(data, model, &all)?;
    let tp = u.nrows() as f64;
    let spatial = match &model.innovation {
        InnovationModel::IsotropicMatern { alpha, kappa } => {
            match build_correlation(&model.sites, *alpha, *kappa, 0.0) {
                Ok(f) => innovation_loglik(&u, &f)?,
                Err(_) => return Ok(f64::NEG_INFINITY),
            }
        }
        InnovationModel::DenseCorrelation { r } => {
            let s = r.len();
            let m = DMatrix::from_fn(s, s, |i, j| r[i][j]);
            if cholesky(&m).is_err() {
                return Ok(f64::NEG_INFINITY);
            }
            innovation_loglik(&u, &CorrelationMatrixFactor::new(m)?)?
        }
        InnovationModel::AxiallySymmetric {
            alpha_m,
            kappa_m,
            xi,
            tau,
            n_lon,
            latitudes,
        } => {
            let masses = axial_masses(alpha_m, kappa_m, *n_lon);
            match coherence_loglik(&u, &masses, *xi, *tau, latitudes) {
                Ok(v) => v,
                Err(SpectralError::NotPositiveDefinite { .. }) | Err(SpectralError::ZeroMass { .. }) => {
                    return Ok(f64::NEG_INFINITY)
                }
                Err(e) => return Err(e.into()),
            }
        }
    };
    let log_sigma: f64 = model.arma.iter().map(|a| a.sigma.ln()).sum();
    Ok(spatial - tp * log_sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MleMode {
    Full,
    /// Every `sigma_s` held at the given value.
    FixedSigma { sigma: Vec<f64> },
}

/// Joint maximization of [`joint_conditional_loglik`] by one Nelder-Mead run
/// over every free parameter. Matérn parameters are searched on the log
/// scale. `start` supplies initial values; parameters it lacks are taken from
/// an SMLE fit.
pub fn mle_fit(
    data: &SpaceTimeData,
    skeleton: &DiagonalVarmaModel,
    mode: &MleMode,
    start: Option<&BTreeMap<ParamId, f64>>,
    cfg: &FitConfig,
) -> Result<FitReport, EstimationError> {
    check_data(data, skeleton)?;
    if let InnovationModel::AxiallySymmetric { .. } = skeleton.innovation {
        return Err(EstimationError::Unsupported(
            "axially symmetric innovations are fitted stepwise only".into(),
        ));
    }
    let mut fixed = BTreeMap::new();
    if let MleMode::FixedSigma { sigma } = mode {
        if sigma.len() != skeleton.n_sites() {
            return Err(EstimationError::SigmaLength {
                expected: skeleton.n_sites(),
                found: sigma.len(),
            });
        }
        for (s, v) in sigma.iter().enumerate() {
            fixed.insert(ParamId::Scale(s), *v);
        }
    }
    let free: Vec<ParamId> = skeleton
        .parameters()
        .into_iter()
        .filter(|p| !fixed.contains_key(p))
        .collect();
    if free.len() > cfg.mle_param_cap {
        return Err(EstimationError::ParameterCap {
            count: free.len(),
            cap: cfg.mle_param_cap,
        });
    }

    let start_time = Instant::now();
    let smle_start;
    let init: &BTreeMap<ParamId, f64> = match start {
        Some(s) if free.iter().all(|p| s.contains_key(p)) => s,
        _ => {
            let part = crate::model::canonical_partition(skeleton);
            let mut rep = smle_fit(data, skeleton, &part, cfg)?;
            if let Some(s) = start {
                rep.estimates.extend(s.iter().map(|(k, v)| (*k, *v)));
            }
            smle_start = rep.estimates;
            &smle_start
        }
    };
    let base = skeleton.with_values(&fixed);
    let log_scale = |p: &ParamId| matches!(p, ParamId::MaternAlpha | ParamId::MaternKappa);
    let mut x0 = Vec::with_capacity(free.len());
    for p in &free {
        let v = *init.get(p).ok_or(EstimationError::MissingParameter(*p))?;
        x0.push(if log_scale(p) { v.ln() } else { v });
    }
    let steps: Vec<f64> = free
        .iter()
        .zip(&x0)
        .map(|(p, v)| {
            if log_scale(p) {
                cfg.optimizer.init_step
            } else {
                cfg.optimizer.init_step * v.abs().max(1.0)
            }
        })
        .collect();

    let unpack = |x: &[f64]| -> DiagonalVarmaModel {
        let mut m = base.clone();
        for (p, v) in free.iter().zip(x) {
            m.set(*p, if log_scale(p) { v.exp() } else { *v });
        }
        m
    };
    let objective = |x: &[f64]| -> f64 {
        let m = unpack(x);
        joint_conditional_loglik(data, &m).unwrap_or(f64::NEG_INFINITY)
    };
    let mut ocfg = cfg.optimizer.clone();
    ocfg.max_iters = cfg.mle_max_iters;
    ocfg.adaptive = cfg.mle_adaptive;
    let t0 = Instant::now();
    let res = nelder_mead_with_steps(objective, &x0, &steps, &ocfg)?;
    let wall = t0.elapsed().as_secs_f64();
    let fitted = unpack(&res.x);
    let estimates = free.iter().map(|p| (*p, fitted.get(*p).expect("free parameter"))).collect();
    let method = match mode {
        MleMode::Full => Method::FullMle,
        MleMode::FixedSigma { .. } => Method::FixedMle,
    };
    Ok(FitReport {
        method,
        estimates,
        fixed,
        per_step: vec![StepReport {
            step: 0,
            stage: 0,
            iterations: res.iterations,
            evaluations: res.evaluations,
            wall_seconds: wall,
            loglik: Some(res.fval),
            converged: res.converged,
            status: StepStatus::Ok,
            warnings: Vec::new(),
        }],
        stage_wall_seconds: vec![wall],
        total_wall_seconds: start_time.elapsed().as_secs_f64(),
        joint_loglik: Some(res.fval),
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonical_partition;
    use crate::simulate::{simulate, SimulationDesign};

    fn small_model(s: usize) -> DiagonalVarmaModel {
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

    fn data(model: &DiagonalVarmaModel, t: usize, seed: u64) -> SpaceTimeData {
        simulate(&SimulationDesign {
            model: model.clone(),
            t,
            burn_in: None,
            seed,
            record_innovations: false,
        })
        .unwrap()
        .data
    }

    #[test]
    fn smle_covers_all_parameters() {
        let m = small_model(4);
        let d = data(&m, 60, 3);
        let rep = smle_fit(&d, &m, &canonical_partition(&m), &FitConfig::default()).unwrap();
        assert!(rep.is_complete());
        let names: BTreeSet<ParamId> = rep.estimates.keys().copied().collect();
        assert_eq!(names, m.parameters().into_iter().collect());
        assert_eq!(rep.stage_wall_seconds.len(), 2);
        assert!(rep.total_wall_seconds >= rep.stage_wall_seconds.iter().cloned().fold(0.0, f64::max));
        assert!(rep.joint_loglik.is_some());
    }

    #[test]
    fn serial_and_parallel_agree() {
        let m = small_model(5);
        let d = data(&m, 50, 11);
        let part = canonical_partition(&m);
        let a = smle_fit(&d, &m, &part, &FitConfig { serial: true, ..Default::default() }).unwrap();
        let b = smle_fit(&d, &m, &part, &FitConfig::default()).unwrap();
        assert_eq!(a.without_timings(), b.without_timings());
    }

    #[test]
    fn scaling_identity() {
        let m = small_model(3);
        let d = data(&m, 12, 5);
        let base = joint_conditional_loglik(&d, &m).unwrap();
        let mut m2 = m.clone();
        m2.arma.iter_mut().for_each(|a| a.sigma *= 2.0);
        let d2 = SpaceTimeData {
            values: &d.values * 2.0,
            ..d.clone()
        };
        let tp = (12 - 2) as f64;
        let scaled = joint_conditional_loglik(&d2, &m2).unwrap();
        assert!((scaled - (base - tp * 3.0 * 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn parameter_cap_enforced() {
        let m = small_model(4);
        let d = data(&m, 30, 1);
        let cfg = FitConfig {
            mle_param_cap: 5,
            ..Default::default()
        };
        assert!(matches!(
            mle_fit(&d, &m, &MleMode::Full, None, &cfg),
            Err(EstimationError::ParameterCap { count: 14, cap: 5 })
        ));
    }

    #[test]
    fn site_mismatch_rejected() {
        let m = small_model(3);
        let d = data(&small_model(2), 30, 1);
        assert!(matches!(
            smle_fit(&d, &m, &canonical_partition(&m), &FitConfig::default()),
            Err(EstimationError::SiteCount { .. })
        ));
    }
}
