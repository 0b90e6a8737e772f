//! Censoring-adjusted split conformal prediction for right-censored
//! survival times, with a covariate-shift-weighted extension.
//!
//! The pipeline splits a survival sample into training and calibration
//! halves, fits censored quantile regression and a localized Kaplan–Meier
//! censoring model on the training half, scores the calibration half with
//! quantile-residual nonconformity scores reweighted by inverse probability
//! of censoring (and optionally by a classifier-estimated covariate density
//! ratio), and turns the resulting p-value curve over a candidate time grid
//! into a prediction interval. A quasi-concavity diagnostic decides whether
//! the curve supports a two-sided interval or only a one-sided lower bound.
//!
//! Modules:
//! - [`data`]: records, datasets, splitting, grids, run configuration
//! - [`csv_io`]: CSV ingestion with one-hot encoding, dataset serialization
//! - [`kernel`]: Nadaraya–Watson weights, localized Kaplan–Meier, bandwidth rule
//! - [`quantile`]: locally weighted censored quantile regression
//! - [`density_ratio`]: classifier-based covariate density ratio
//! - [`forest`]: the random forest behind the density ratio
//! - [`conformal`]: scores, p-values, diagnostics, interval extraction
//! - [`pipeline`]: end-to-end fit/predict glue
//! - [`sim`]: data generators and the replication engine for coverage studies
//! - [`oracle`]: independent brute-force references used by the test suites

pub mod conformal;
pub mod csv_io;
pub mod data;
pub mod density_ratio;
pub mod forest;
pub mod kernel;
mod linalg;
pub mod oracle;
pub mod pipeline;
pub mod quantile;
pub mod rng;
pub mod sim;

pub use conformal::{
    pvalue_at, pvalue_curve, quantile_residual_score, CalibrationScores, PValueCurve, Verdict,
};
pub use data::{
    default_grid, split, CandidateGrid, RunConfig, SplitIndex, Subject, SurvivalDataset,
};
pub use density_ratio::{fit_ratio, DensityRatioModel, ShiftWeight};
pub use kernel::{bandwidth_rule, nw_weights, ConditionalCdf, KernelSpec, LocalizedKaplanMeier};
pub use pipeline::{fit_pipeline, FittedPipeline};
pub use quantile::{fit_pair, redistribution_weights, QuantileModel, QuantilePair};
pub use sim::{run_scenario, MetricRow, ScenarioSpec};
