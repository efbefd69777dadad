//! Multiple imputation by chained equations with not-at-random extensions.
//!
//! This crate implements fully conditional specification (FCS) multiple
//! imputation for rectangular datasets with continuous and binary variables,
//! together with the delta-adjustment machinery needed for missing-not-at-random
//! (MNAR) sensitivity analysis:
//!
//! - [`data`] — typed datasets with an explicit missingness mask, CSV I/O and
//!   missingness summaries
//! - [`kernel`] — least-squares and logistic fits plus the Bayesian posterior
//!   draws behind the univariate imputers
//! - [`ums`] — the offset-expression mini-language used to specify sensitivity
//!   parameters (an intercept delta plus optional `coef*variable` terms)
//! - [`impute`] — univariate imputation methods: `norm`, `logreg` and their
//!   delta-adjusted `mnar.*` variants
//! - [`engine`] — the chained-equations driver: visit sequence, iterations,
//!   parallel chains, predictor matrix, trace diagnostics
//! - [`pool`] — per-imputation analysis fits and Rubin's-rules pooling
//! - [`sensitivity`] — delta-grid sweeps and marginal-to-conditional
//!   sensitivity-parameter calibration
//! - [`simulate`] — a synthetic cohort generator with configurable missingness
//!   mechanisms and a replicate-study harness
//! - [`config`] / [`report`] — the config file format and CSV/SVG/manifest
//!   outputs used by the `narfcs` binary
//!
//! The `examples/` directory contains one runnable example per capability;
//! `narfcs --help` documents the equivalent command-line workflow.
//!
//! Everything is deterministic given a seed: chains, sweep cells and simulation
//! replicates each derive an independent random stream, so results do not
//! depend on thread count or execution order.

pub mod cli;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod impute;
pub mod kernel;
pub mod pool;
pub mod report;
pub mod rng;
pub mod sensitivity;
pub mod simulate;
pub mod ums;

pub use data::{Dataset, MissingnessSummary, VarKind, VarRole, VariableMeta};
pub use engine::{MiceSpec, MultiImputation, PredictorMatrix, run_fcs, run_narfcs};
pub use error::{Error, Result};
pub use pool::{AnalysisModel, PooledResult, fit_target, pool, recommend_m};
pub use sensitivity::{CalibrationResult, CalibrationTarget, DeltaGrid, SweepResult};

pub use ums::UmsExpression;
