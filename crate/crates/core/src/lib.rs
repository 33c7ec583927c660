//! Marginally parametrized spatio-temporal models and their stepwise
//! maximum likelihood estimation.
//!
//! The central model is a diagonal VARMA: every site follows its own
//! univariate ARMA, and cross-site dependence lives only in the correlation
//! of the innovations (isotropic Matérn, axially symmetric spectral, or an
//! unstructured matrix). Estimation runs the stages of a
//! [`model::ParameterPartition`] in order, fitting the steps within a stage
//! concurrently.

pub mod arma;
pub mod data;
pub mod estimation;
pub mod linalg;
pub mod matern;
pub mod model;
pub mod optim;
pub mod simulate;
pub mod special;
pub mod spectral;

pub use arma::{arma_autocovariance, arma_loglik, arma_residuals, fit_arma, ArmaFit, ArmaFitOptions, MeanTerm};
pub use data::{DataError, SpaceTimeData};
pub use estimation::{joint_conditional_loglik, mle_fit, smle_fit, FitConfig, FitReport, Method, MleMode};
pub use matern::{build_correlation, innovation_loglik, matern_correlation, CorrelationMatrixFactor};
pub use model::{
    canonical_partition, validate_partition, ArmaSpec, DataSubset, DiagonalVarmaModel, InnovationModel,
    MeanModel, ParamId, ParameterPartition, PartitionError, PartitionStep, StageSchedule,
};
pub use optim::{nelder_mead, OptimizerConfig, OptimizerResult};
pub use simulate::{simulate, SimulationDesign, SimulationOutput};
pub use spectral::{coherence, coherence_loglik, modified_matern_mass, whittle_loglik, SpectralMass};
