//! Model data types and the parameter-partition structure.
//!
//! A diagonal VARMA model is `S` univariate ARMA specifications tied together
//! by an innovation correlation model. Its parameters are addressed by
//! structured [`ParamId`]s so that a [`ParameterPartition`] can be checked with
//! plain set algebra.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("site {site}: sigma must be positive, got {sigma}")]
    NonPositiveScale { site: usize, sigma: f64 },
    #[error("site {site}: AR polynomial has a root on or inside the unit circle")]
    NonStationary { site: usize },
    #[error("site {site}: order fields (p={p}, q={q}) disagree with coefficient lengths ({np}, {nq})")]
    OrderMismatch {
        site: usize,
        p: usize,
        q: usize,
        np: usize,
        nq: usize,
    },
    #[error("site {site}: non-finite coefficient")]
    NonFinite { site: usize },
    #[error("model has no sites")]
    NoSites,
    #[error("{sites} sites but {specs} ARMA specifications")]
    SiteCount { sites: usize, specs: usize },
    #[error("invalid innovation model: {0}")]
    Innovation(String),
    #[error("sites do not form the {n_lon}x{n_lat} longitude-latitude grid (first mismatch at site {site})")]
    NotAGrid { n_lon: usize, n_lat: usize, site: usize },
}

/// How the per-site mean enters the model and whether it is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeanModel {
    /// `mu` and `beta1` are known constants taken from the model.
    Fixed,
    /// `mu` is estimated; no trend (`beta1 = 0`).
    #[default]
    Constant,
    /// `mu + beta1 * t` with both coefficients estimated.
    Trend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaSpec {
    pub p: usize,
    pub q: usize,
    pub mu: f64,
    #[serde(default)]
    pub beta1: f64,
    pub sigma: f64,
    pub phi: Vec<f64>,
    pub pi_ma: Vec<f64>,
}

impl ArmaSpec {
    pub fn new(mu: f64, beta1: f64, sigma: f64, phi: Vec<f64>, pi_ma: Vec<f64>) -> Self {
        Self {
            p: phi.len(),
            q: pi_ma.len(),
            mu,
            beta1,
            sigma,
            phi,
            pi_ma,
        }
    }

    pub fn white_noise(mu: f64, sigma: f64) -> Self {
        Self::new(mu, 0.0, sigma, vec![], vec![])
    }

    pub fn ar(mu: f64, sigma: f64, phi: Vec<f64>) -> Self {
        Self::new(mu, 0.0, sigma, phi, vec![])
    }

    /// Mean at (1-based) time `t`.
    #[inline]
    pub fn mean_at(&self, t: f64) -> f64 {
        self.mu + self.beta1 * t
    }

    pub fn is_stationary(&self) -> bool {
        is_stationary(&self.phi)
    }

    /// True when `1 + pi_1 z + ... + pi_q z^q` has all roots outside the unit circle.
    pub fn is_invertible(&self) -> bool {
        let neg: Vec<f64> = self.pi_ma.iter().map(|v| -v).collect();
        is_stationary(&neg)
    }

    pub fn validate(&self, site: usize) -> Result<(), ModelError> {
        if self.p != self.phi.len() || self.q != self.pi_ma.len() {
            return Err(ModelError::OrderMismatch {
                site,
                p: self.p,
                q: self.q,
                np: self.phi.len(),
                nq: self.pi_ma.len(),
            });
        }
        let finite = [self.mu, self.beta1, self.sigma]
            .iter()
            .chain(&self.phi)
            .chain(&self.pi_ma)
            .all(|v| v.is_finite());
        if !finite {
            return Err(ModelError::NonFinite { site });
        }
        if !(self.sigma > 0.0) {
            return Err(ModelError::NonPositiveScale {
                site,
                sigma: self.sigma,
            });
        }
        if !self.is_stationary() {
            return Err(ModelError::NonStationary { site });
        }
        Ok(())
    }
}

/// Stationarity of `1 - phi_1 z - ... - phi_p z^p` via the step-down
/// (reverse Durbin-Levinson) recursion: all partial autocorrelations must lie
/// strictly inside (-1, 1).
pub fn is_stationary(phi: &[f64]) -> bool {
    let mut a = phi.to_vec();
    while let Some(&r) = a.last() {
        if !(r.abs() < 1.0) {
            return false;
        }
        let k = a.len();
        let denom = 1.0 - r * r;
        let prev: Vec<f64> = (0..k - 1)
            .map(|j| (a[j] + r * a[k - 2 - j]) / denom)
            .collect();
        a = prev;
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum InnovationModel {
    IsotropicMatern {
        alpha: f64,
        kappa: f64,
    },
    AxiallySymmetric {
        alpha_m: Vec<f64>,
        kappa_m: Vec<f64>,
        xi: f64,
        tau: f64,
        n_lon: usize,
        latitudes: Vec<f64>,
    },
    DenseCorrelation {
        #[serde(rename = "R")]
        r: Vec<Vec<f64>>,
    },
}

impl InnovationModel {
    pub fn validate(&self, n_sites: usize) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Innovation(m.to_string()));
        match self {
            InnovationModel::IsotropicMatern { alpha, kappa } => {
                if !(*alpha > 0.0 && *kappa > 0.0 && alpha.is_finite() && kappa.is_finite()) {
                    return bad("alpha and kappa must be positive and finite");
                }
            }
            InnovationModel::AxiallySymmetric {
                alpha_m,
                kappa_m,
                xi,
                tau,
                n_lon,
                latitudes,
            } => {
                let m = latitudes.len();
                if m == 0 || alpha_m.len() != m || kappa_m.len() != m {
                    return bad("alpha_m, kappa_m and latitudes must share a nonzero length");
                }
                if *n_lon < 2 {
                    return bad("n_lon must be at least 2");
                }
                if n_lon * m != n_sites {
                    return bad("n_lon * number of latitudes must equal the number of sites");
                }
                if alpha_m.iter().chain(kappa_m).any(|v| !(*v > 0.0 && v.is_finite())) {
                    return bad("alpha_m and kappa_m must be positive");
                }
                if !(*xi > 0.0 && *xi < 1.0) {
                    return bad("xi must lie in (0, 1)");
                }
                if !(*tau >= 0.0 && tau.is_finite()) {
                    return bad("tau must be non-negative");
                }
                if latitudes.iter().any(|v| !v.is_finite()) {
                    return bad("latitudes must be finite");
                }
            }
            InnovationModel::DenseCorrelation { r } => {
                if r.len() != n_sites || r.iter().any(|row| row.len() != n_sites) {
                    return bad("R must be S x S");
                }
                for i in 0..n_sites {
                    if r[i][i] != 1.0 {
                        return bad("R must have a unit diagonal");
                    }
                    for j in 0..i {
                        if (r[i][j] - r[j][i]).abs() > 1e-14 {
                            return bad("R must be symmetric");
                        }
                    }
                }
                let m = nalgebra::DMatrix::from_fn(n_sites, n_sites, |i, j| r[i][j]);
                if let Err(pivot) = linalg::cholesky(&m) {
                    return Err(ModelError::Innovation(format!(
                        "R is not positive definite (pivot {pivot})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Structured parameter identifier. Site and latitude indices are 0-based;
/// AR/MA lags are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamId {
    Mean(usize),
    Trend(usize),
    Scale(usize),
    Ar(usize, usize),
    Ma(usize, usize),
    MaternAlpha,
    MaternKappa,
    SpectralAlpha(usize),
    SpectralKappa(usize),
    CoherenceXi,
    CoherenceTau,
    /// Off-diagonal entry `(i, j)` with `i < j` of an unstructured correlation.
    Corr(usize, usize),
}

impl ParamId {
    pub fn site(&self) -> Option<usize> {
        match *self {
            ParamId::Mean(s) | ParamId::Trend(s) | ParamId::Scale(s) => Some(s),
            ParamId::Ar(s, _) | ParamId::Ma(s, _) => Some(s),
            _ => None,
        }
    }

    pub fn is_temporal(&self) -> bool {
        self.site().is_some()
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamId::Mean(s) => write!(f, "mu[{s}]"),
            ParamId::Trend(s) => write!(f, "beta1[{s}]"),
            ParamId::Scale(s) => write!(f, "sigma[{s}]"),
            ParamId::Ar(s, i) => write!(f, "phi[{s},{i}]"),
            ParamId::Ma(s, j) => write!(f, "pi[{s},{j}]"),
            ParamId::MaternAlpha => write!(f, "alpha"),
            ParamId::MaternKappa => write!(f, "kappa"),
            ParamId::SpectralAlpha(m) => write!(f, "alpha_m[{m}]"),
            ParamId::SpectralKappa(m) => write!(f, "kappa_m[{m}]"),
            ParamId::CoherenceXi => write!(f, "xi"),
            ParamId::CoherenceTau => write!(f, "tau"),
            ParamId::Corr(i, j) => write!(f, "R[{i},{j}]"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unrecognized parameter name '{0}'")]
pub struct ParseParamError(pub String);

impl FromStr for ParamId {
    type Err = ParseParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseParamError(s.to_string());
        match s {
            "alpha" => return Ok(ParamId::MaternAlpha),
            "kappa" => return Ok(ParamId::MaternKappa),
            "xi" => return Ok(ParamId::CoherenceXi),
            "tau" => return Ok(ParamId::CoherenceTau),
            _ => {}
        }
        let open = s.find('[').ok_or_else(err)?;
        let inner = s[open..]
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(err)?;
        let idx: Vec<usize> = inner
            .split(',')
            .map(|v| v.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| err())?;
        let id = match (&s[..open], idx.as_slice()) {
            ("mu", [a]) => ParamId::Mean(*a),
            ("beta1", [a]) => ParamId::Trend(*a),
            ("sigma", [a]) => ParamId::Scale(*a),
            ("phi", [a, b]) if *b >= 1 => ParamId::Ar(*a, *b),
            ("pi", [a, b]) if *b >= 1 => ParamId::Ma(*a, *b),
            ("alpha_m", [a]) => ParamId::SpectralAlpha(*a),
            ("kappa_m", [a]) => ParamId::SpectralKappa(*a),
            ("R", [a, b]) if a < b => ParamId::Corr(*a, *b),
            _ => return Err(err()),
        };
        Ok(id)
    }
}

impl Serialize for ParamId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ParamId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalVarmaModel {
    /// Site coordinates: points in R^d, or `[lon_index, lat_index]` on a grid.
    pub sites: Vec<Vec<f64>>,
    pub arma: Vec<ArmaSpec>,
    pub innovation: InnovationModel,
    #[serde(default)]
    pub mean_model: MeanModel,
}

impl DiagonalVarmaModel {
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn max_p(&self) -> usize {
        self.arma.iter().map(|a| a.p).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.sites.is_empty() {
            return Err(ModelError::NoSites);
        }
        if self.sites.len() != self.arma.len() {
            return Err(ModelError::SiteCount {
                sites: self.sites.len(),
                specs: self.arma.len(),
            });
        }
        for (s, spec) in self.arma.iter().enumerate() {
            spec.validate(s)?;
        }
        self.innovation.validate(self.n_sites())?;
        if let InnovationModel::AxiallySymmetric { n_lon, latitudes, .. } = &self.innovation {
            for (s, site) in self.sites.iter().enumerate() {
                let want = [(s % n_lon) as f64, (s / n_lon) as f64];
                if site.as_slice() != want {
                    return Err(ModelError::NotAGrid {
                        n_lon: *n_lon,
                        n_lat: latitudes.len(),
                        site: s,
                    });
                }
            }
        }
        Ok(())
    }

    /// Temporal parameters of one site in canonical order.
    pub fn temporal_params(&self, site: usize) -> Vec<ParamId> {
        let spec = &self.arma[site];
        let mut out = Vec::with_capacity(spec.p + spec.q + 3);
        match self.mean_model {
            MeanModel::Fixed => {}
            MeanModel::Constant => out.push(ParamId::Mean(site)),
            MeanModel::Trend => {
                out.push(ParamId::Mean(site));
                out.push(ParamId::Trend(site));
            }
        }
        out.push(ParamId::Scale(site));
        out.extend((1..=spec.p).map(|i| ParamId::Ar(site, i)));
        out.extend((1..=spec.q).map(|j| ParamId::Ma(site, j)));
        out
    }

    pub fn innovation_params(&self) -> Vec<ParamId> {
        match &self.innovation {
            InnovationModel::IsotropicMatern { .. } => {
                vec![ParamId::MaternAlpha, ParamId::MaternKappa]
            }
            InnovationModel::AxiallySymmetric { latitudes, .. } => {
                let mut v: Vec<ParamId> = (0..latitudes.len())
                    .flat_map(|m| [ParamId::SpectralAlpha(m), ParamId::SpectralKappa(m)])
                    .collect();
                v.push(ParamId::CoherenceXi);
                v.push(ParamId::CoherenceTau);
                v
            }
            InnovationModel::DenseCorrelation { r } => {
                let s = r.len();
                (0..s)
                    .flat_map(|i| ((i + 1)..s).map(move |j| ParamId::Corr(i, j)))
                    .collect()
            }
        }
    }

    /// Every free parameter of the model.
    pub fn parameters(&self) -> Vec<ParamId> {
        let mut v: Vec<ParamId> = (0..self.n_sites())
            .flat_map(|s| self.temporal_params(s))
            .collect();
        v.extend(self.innovation_params());
        v
    }

    pub fn get(&self, id: ParamId) -> Option<f64> {
        let spec = |s: usize| self.arma.get(s);
        match (id, &self.innovation) {
            (ParamId::Mean(s), _) => spec(s).map(|a| a.mu),
            (ParamId::Trend(s), _) => spec(s).map(|a| a.beta1),
            (ParamId::Scale(s), _) => spec(s).map(|a| a.sigma),
            (ParamId::Ar(s, i), _) => spec(s).and_then(|a| a.phi.get(i.checked_sub(1)?).copied()),
            (ParamId::Ma(s, j), _) => spec(s).and_then(|a| a.pi_ma.get(j.checked_sub(1)?).copied()),
            (ParamId::MaternAlpha, InnovationModel::IsotropicMatern { alpha, .. }) => Some(*alpha),
            (ParamId::MaternKappa, InnovationModel::IsotropicMatern { kappa, .. }) => Some(*kappa),
            (ParamId::SpectralAlpha(m), InnovationModel::AxiallySymmetric { alpha_m, .. }) => {
                alpha_m.get(m).copied()
            }
            (ParamId::SpectralKappa(m), InnovationModel::AxiallySymmetric { kappa_m, .. }) => {
                kappa_m.get(m).copied()
            }
            (ParamId::CoherenceXi, InnovationModel::AxiallySymmetric { xi, .. }) => Some(*xi),
            (ParamId::CoherenceTau, InnovationModel::AxiallySymmetric { tau, .. }) => Some(*tau),
            (ParamId::Corr(i, j), InnovationModel::DenseCorrelation { r }) => {
                r.get(i).and_then(|row| row.get(j)).copied()
            }
            _ => None,
        }
    }

    /// Sets a parameter; returns false when the model has no such parameter.
    pub fn set(&mut self, id: ParamId, value: f64) -> bool {
        let slot: Option<&mut f64> = match (id, &mut self.innovation) {
            (ParamId::Mean(s), _) => self.arma.get_mut(s).map(|a| &mut a.mu),
            (ParamId::Trend(s), _) => self.arma.get_mut(s).map(|a| &mut a.beta1),
            (ParamId::Scale(s), _) => self.arma.get_mut(s).map(|a| &mut a.sigma),
            (ParamId::Ar(s, i), _) => self
                .arma
                .get_mut(s)
                .and_then(|a| a.phi.get_mut(i.checked_sub(1)?)),
            (ParamId::Ma(s, j), _) => self
                .arma
                .get_mut(s)
                .and_then(|a| a.pi_ma.get_mut(j.checked_sub(1)?)),
            (ParamId::MaternAlpha, InnovationModel::IsotropicMatern { alpha, .. }) => Some(alpha),
            (ParamId::MaternKappa, InnovationModel::IsotropicMatern { kappa, .. }) => Some(kappa),
            (ParamId::SpectralAlpha(m), InnovationModel::AxiallySymmetric { alpha_m, .. }) => {
                alpha_m.get_mut(m)
            }
            (ParamId::SpectralKappa(m), InnovationModel::AxiallySymmetric { kappa_m, .. }) => {
                kappa_m.get_mut(m)
            }
            (ParamId::CoherenceXi, InnovationModel::AxiallySymmetric { xi, .. }) => Some(xi),
            (ParamId::CoherenceTau, InnovationModel::AxiallySymmetric { tau, .. }) => Some(tau),
            (ParamId::Corr(i, j), InnovationModel::DenseCorrelation { r }) => {
                if i < j && j < r.len() {
                    r[j][i] = value;
                    Some(&mut r[i][j])
                } else {
                    None
                }
            }
            _ => None,
        };
        match slot {
            Some(v) => {
                *v = value;
                true
            }
            None => false,
        }
    }

    /// Copy of the model with every parameter found in `values` overwritten.
    pub fn with_values(&self, values: &BTreeMap<ParamId, f64>) -> Self {
        let mut m = self.clone();
        for (id, v) in values {
            m.set(*id, *v);
        }
        m
    }

    pub fn values(&self) -> BTreeMap<ParamId, f64> {
        self.parameters()
            .into_iter()
            .filter_map(|id| self.get(id).map(|v| (id, v)))
            .collect()
    }
}

/// Data subset that a step's marginal likelihood is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSubset {
    /// The time series of one site.
    Site(usize),
    /// Innovations on one latitude ring of a grid.
    Latitude(usize),
    /// The full data set.
    AllSites,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionStep {
    pub primary: BTreeSet<ParamId>,
    pub nuisance: BTreeSet<ParamId>,
    pub data: DataSubset,
    pub stage: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPartition {
    pub steps: Vec<PartitionStep>,
}

/// Stages in execution order; each stage lists step indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub stages: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

impl StageSchedule {
    pub fn stage_of(&self, step: usize) -> Option<usize> {
        self.stages.iter().position(|s| s.contains(&step))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("partition has no steps")]
    Empty,
    #[error("step {step} has no primary parameters")]
    EmptyPrimary { step: usize },
    #[error("step {step} references unknown parameter {param}")]
    UnknownParameter { step: usize, param: ParamId },
    #[error("parameter {param} is primary in both step {first} and step {second}")]
    Overlap {
        param: ParamId,
        first: usize,
        second: usize,
    },
    #[error("parameters not assigned to any step: {missing:?}")]
    Coverage { missing: Vec<ParamId> },
    #[error("step {step} uses nuisance parameter {param} that no earlier step estimates")]
    NuisanceOrder { step: usize, param: ParamId },
    #[error("step {step} in stage {stage} needs {param}, which is not estimated in an earlier stage")]
    Stage {
        step: usize,
        stage: usize,
        param: ParamId,
    },
    #[error("step {step} has stage index lower than a preceding step")]
    StageOrder { step: usize },
}

/// Checks the partition against the model and returns its stage schedule.
pub fn validate_partition(
    part: &ParameterPartition,
    model: &DiagonalVarmaModel,
) -> Result<StageSchedule, PartitionError> {
    if part.steps.is_empty() {
        return Err(PartitionError::Empty);
    }
    let all: BTreeSet<ParamId> = model.parameters().into_iter().collect();

    let mut owner: BTreeMap<ParamId, usize> = BTreeMap::new();
    for (k, step) in part.steps.iter().enumerate() {
        if step.primary.is_empty() {
            return Err(PartitionError::EmptyPrimary { step: k });
        }
        for p in step.primary.iter().chain(&step.nuisance) {
            if !all.contains(p) {
                return Err(PartitionError::UnknownParameter { step: k, param: *p });
            }
        }
        for p in &step.primary {
            if let Some(&first) = owner.get(p) {
                return Err(PartitionError::Overlap {
                    param: *p,
                    first,
                    second: k,
                });
            }
            owner.insert(*p, k);
        }
    }

    let missing: Vec<ParamId> = all.iter().filter(|p| !owner.contains_key(p)).copied().collect();
    if !missing.is_empty() {
        return Err(PartitionError::Coverage { missing });
    }

    for (k, step) in part.steps.iter().enumerate() {
        for p in &step.nuisance {
            if owner[p] >= k {
                return Err(PartitionError::NuisanceOrder { step: k, param: *p });
            }
        }
    }

    for k in 1..part.steps.len() {
        if part.steps[k].stage < part.steps[k - 1].stage {
            return Err(PartitionError::StageOrder { step: k });
        }
    }
    for (k, step) in part.steps.iter().enumerate() {
        for p in &step.nuisance {
            if part.steps[owner[p]].stage >= step.stage {
                return Err(PartitionError::Stage {
                    step: k,
                    stage: step.stage,
                    param: *p,
                });
            }
        }
    }

    let mut stages: Vec<Vec<usize>> = Vec::new();
    let mut last = None;
    for (k, step) in part.steps.iter().enumerate() {
        if last != Some(step.stage) {
            stages.push(Vec::new());
            last = Some(step.stage);
        }
        stages.last_mut().unwrap().push(k);
    }

    let mut warnings = Vec::new();
    if part.steps.len() == 1 {
        warnings.push(
            "single-step partition: the model is degenerate (K = 1), SMLE reduces to MLE".into(),
        );
    }
    Ok(StageSchedule { stages, warnings })
}

/// The canonical partition: one temporal step per site, then the innovation
/// steps (one joint step, or per-latitude spectral steps plus one coherence
/// step for the axially symmetric model).
pub fn canonical_partition(model: &DiagonalVarmaModel) -> ParameterPartition {
    let s = model.n_sites();
    let mut steps: Vec<PartitionStep> = (0..s)
        .map(|site| PartitionStep {
            primary: model.temporal_params(site).into_iter().collect(),
            nuisance: BTreeSet::new(),
            data: DataSubset::Site(site),
            stage: 0,
        })
        .collect();
    let temporal: BTreeSet<ParamId> = steps.iter().flat_map(|st| st.primary.clone()).collect();

    match &model.innovation {
        InnovationModel::AxiallySymmetric { latitudes, .. } => {
            let mut spectral = BTreeSet::new();
            for m in 0..latitudes.len() {
                let primary: BTreeSet<ParamId> =
                    [ParamId::SpectralAlpha(m), ParamId::SpectralKappa(m)].into();
                spectral.extend(primary.iter().copied());
                steps.push(PartitionStep {
                    primary,
                    nuisance: temporal.clone(),
                    data: DataSubset::Latitude(m),
                    stage: 1,
                });
            }
            let mut nuisance = temporal.clone();
            nuisance.extend(spectral);
            steps.push(PartitionStep {
                primary: [ParamId::CoherenceXi, ParamId::CoherenceTau].into(),
                nuisance,
                data: DataSubset::AllSites,
                stage: 2,
            });
        }
        _ => {
            let primary: BTreeSet<ParamId> = model.innovation_params().into_iter().collect();
            if !primary.is_empty() {
                steps.push(PartitionStep {
                    primary,
                    nuisance: temporal,
                    data: DataSubset::AllSites,
                    stage: 1,
                });
            }
        }
    }
    ParameterPartition { steps }
}
