//! Core record types, dataset container, deterministic train/calibration
//! splitting, and run configuration shared by all estimators.

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::rng::{derive_seed, seeded_rng};

/// How many reseeded splits to attempt before giving up on finding an
/// uncensored calibration subject.
const SPLIT_RETRIES: usize = 20;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset must contain at least one subject")]
    EmptyDataset,
    #[error("subject {index}: covariate length {got} does not match dataset dimension {expected}")]
    DimensionMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("subject {index}: observed time {value} must be positive and finite")]
    InvalidTime { index: usize, value: f64 },
    #[error("subject {index}: covariates must be finite")]
    NonFiniteCovariate { index: usize },
    #[error("{got} feature names for covariate dimension {expected}")]
    FeatureNameMismatch { got: usize, expected: usize },
    #[error("split fraction {0} must lie strictly in (0, 1)")]
    InvalidFraction(f64),
    #[error("split leaves an empty side (n = {n}, train = {train})")]
    DegenerateSplit { n: usize, train: usize },
    #[error("no uncensored subject landed in the calibration set after {retries} reseeded splits")]
    NoUncensoredCalibration { retries: usize },
    #[error("candidate grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),
    #[error("invalid grid range [{t_min}, {t_max}]")]
    InvalidGridRange { t_min: f64, t_max: f64 },
    #[error("miscoverage alpha {0} must lie strictly in (0, 1)")]
    InvalidAlpha(f64),
    #[error("probability clip bounds ({0}, {1}) must satisfy 0 < lo < hi < 1")]
    InvalidClip(f64, f64),
    #[error("censoring cdf cap {0} must lie strictly in (0, 1)")]
    InvalidCap(f64),
    #[error("bandwidth override {0} must be positive")]
    InvalidBandwidth(f64),
}

/// One observed record: covariates, follow-up time `Y = min(T, C)` and the
/// event indicator (`true` when the event was observed, `false` when the
/// subject was censored).
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub covariates: Vec<f64>,
    pub observed_time: f64,
    pub event: bool,
}

impl Subject {
    pub fn new(covariates: Vec<f64>, observed_time: f64, event: bool) -> Self {
        Self {
            covariates,
            observed_time,
            event,
        }
    }
}

/// An immutable right-censored survival sample.
///
/// All subjects share one covariate dimension and one time unit. Datasets
/// with zero observed events can be constructed (they arise in small or
/// heavily censored samples) but every operation that needs a calibration
/// score rejects them explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    subjects: Vec<Subject>,
    feature_names: Vec<String>,
}

impl SurvivalDataset {
    pub fn new(subjects: Vec<Subject>, feature_names: Vec<String>) -> Result<Self, DataError> {
        if subjects.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let dim = subjects[0].covariates.len();
        if feature_names.len() != dim {
            return Err(DataError::FeatureNameMismatch {
                got: feature_names.len(),
                expected: dim,
            });
        }
        for (index, s) in subjects.iter().enumerate() {
            if s.covariates.len() != dim {
                return Err(DataError::DimensionMismatch {
                    index,
                    got: s.covariates.len(),
                    expected: dim,
                });
            }
            if !(s.observed_time.is_finite() && s.observed_time > 0.0) {
                return Err(DataError::InvalidTime {
                    index,
                    value: s.observed_time,
                });
            }
            if s.covariates.iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFiniteCovariate { index });
            }
        }
        Ok(Self {
            subjects,
            feature_names,
        })
    }

    /// Build a dataset with synthetic feature names `x1..xp`.
    pub fn from_subjects(subjects: Vec<Subject>) -> Result<Self, DataError> {
        let dim = subjects.first().map_or(0, |s| s.covariates.len());
        let names = (1..=dim).map(|i| format!("x{i}")).collect();
        Self::new(subjects, names)
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty datasets
    }

    pub fn dim(&self) -> usize {
        self.subjects[0].covariates.len()
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Fraction of censored subjects, `1 - mean(event)`.
    pub fn censoring_rate(&self) -> f64 {
        let censored = self.subjects.iter().filter(|s| !s.event).count();
        censored as f64 / self.subjects.len() as f64
    }

    pub fn n_events(&self) -> usize {
        self.subjects.iter().filter(|s| s.event).count()
    }

    pub fn max_observed_time(&self) -> f64 {
        self.subjects
            .iter()
            .map(|s| s.observed_time)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Clone the rows selected by `ids` (asserts that `ids` is non-empty and
    /// in range; callers pass indices produced by [`split`]).
    pub fn subset(&self, ids: &[usize]) -> SurvivalDataset {
        assert!(!ids.is_empty(), "subset of a dataset cannot be empty");
        SurvivalDataset {
            subjects: ids.iter().map(|&i| self.subjects[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn covariates(&self) -> Vec<Vec<f64>> {
        self.subjects.iter().map(|s| s.covariates.clone()).collect()
    }
}

/// A disjoint train/calibration partition of a dataset, remembered together
/// with the seed that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndex {
    pub train_ids: Vec<usize>,
    pub calib_ids: Vec<usize>,
    pub seed: u64,
}

/// Uniformly random train/calibration partition with
/// `|train| = round(fraction * n)`, deterministic given `seed`.
///
/// Reseeds up to 20 times until the calibration side contains at least one
/// uncensored subject; otherwise no calibration score would exist.
pub fn split(
    dataset: &SurvivalDataset,
    fraction: f64,
    seed: u64,
) -> Result<SplitIndex, DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::InvalidFraction(fraction));
    }
    let n = dataset.len();
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(DataError::DegenerateSplit { n, train: n_train });
    }
    for attempt in 0..=SPLIT_RETRIES {
        let attempt_seed = if attempt == 0 {
            seed
        } else {
            derive_seed(seed, attempt as u64)
        };
        let mut ids: Vec<usize> = (0..n).collect();
        ids.shuffle(&mut seeded_rng(attempt_seed));
        let mut train_ids: Vec<usize> = ids[..n_train].to_vec();
        let mut calib_ids: Vec<usize> = ids[n_train..].to_vec();
        train_ids.sort_unstable();
        calib_ids.sort_unstable();
        if calib_ids.iter().any(|&i| dataset.subjects()[i].event) {
            return Ok(SplitIndex {
                train_ids,
                calib_ids,
                seed,
            });
        }
    }
    Err(DataError::NoUncensoredCalibration {
        retries: SPLIT_RETRIES,
    })
}

/// Evenly spaced candidate times over which p-value curves are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub n_points: usize,
}

impl CandidateGrid {
    pub fn new(t_min: f64, t_max: f64, n_points: usize) -> Result<Self, DataError> {
        if n_points < 2 {
            return Err(DataError::GridTooSmall(n_points));
        }
        if !(t_min.is_finite() && t_max.is_finite() && t_min >= 0.0 && t_min < t_max) {
            return Err(DataError::InvalidGridRange { t_min, t_max });
        }
        Ok(Self {
            t_min,
            t_max,
            n_points,
        })
    }

    /// The evaluation points: strictly increasing, constant step, endpoints
    /// included exactly.
    pub fn points(&self) -> Vec<f64> {
        let n = self.n_points;
        let step = (self.t_max - self.t_min) / (n - 1) as f64;
        let mut pts: Vec<f64> = (0..n).map(|i| self.t_min + step * i as f64).collect();
        pts[n - 1] = self.t_max;
        pts
    }

    pub fn step(&self) -> f64 {
        (self.t_max - self.t_min) / (self.n_points - 1) as f64
    }
}

/// Default candidate grid: `[0, 1.25 * max observed time]`.
///
/// Wide enough for observational cohorts where the observed follow-up spans
/// the outcome scale. Simulation scenarios whose event times run far past
/// the censoring support override the range explicitly.
pub fn default_grid(dataset: &SurvivalDataset, n_points: usize) -> Result<CandidateGrid, DataError> {
    CandidateGrid::new(0.0, 1.25 * dataset.max_observed_time(), n_points)
}

/// Shared run configuration: target miscoverage, candidate grid, split
/// fraction, censoring-cdf truncation and classifier probability clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Target miscoverage rate in (0, 1).
    pub alpha: f64,
    /// Explicit candidate grid; `None` derives the default from the data.
    pub grid: Option<CandidateGrid>,
    /// Number of grid points when the grid is derived from the data.
    pub grid_points: usize,
    pub split_fraction: f64,
    /// Truncation cap for the estimated censoring cdf, keeps IPC weights
    /// below `1 / (1 - cap)`.
    pub censoring_cdf_cap: f64,
    /// Classifier probability clip `(lo, hi)` for the density ratio.
    pub prob_clip: (f64, f64),
    /// Overrides the effective-sample-size bandwidth rule when set.
    pub bandwidth_override: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            grid: None,
            grid_points: 400,
            split_fraction: 0.5,
            censoring_cdf_cap: 0.99,
            prob_clip: (0.01, 0.99),
            bandwidth_override: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(DataError::InvalidAlpha(self.alpha));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(DataError::InvalidFraction(self.split_fraction));
        }
        if !(self.censoring_cdf_cap > 0.0 && self.censoring_cdf_cap < 1.0) {
            return Err(DataError::InvalidCap(self.censoring_cdf_cap));
        }
        let (lo, hi) = self.prob_clip;
        if !(lo > 0.0 && lo < hi && hi < 1.0) {
            return Err(DataError::InvalidClip(lo, hi));
        }
        if self.grid_points < 2 {
            return Err(DataError::GridTooSmall(self.grid_points));
        }
        if let Some(h) = self.bandwidth_override {
            if !(h.is_finite() && h > 0.0) {
                return Err(DataError::InvalidBandwidth(h));
            }
        }
        Ok(())
    }

    /// The grid to evaluate on: the explicit one when set, otherwise the
    /// data-derived default.
    pub fn resolve_grid(&self, dataset: &SurvivalDataset) -> Result<CandidateGrid, DataError> {
        match &self.grid {
            Some(g) => Ok(g.clone()),
            None => default_grid(dataset, self.grid_points),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, events: &[bool]) -> SurvivalDataset {
        let subjects = (0..n)
            .map(|i| Subject::new(vec![i as f64 / n as f64], 1.0 + i as f64, events[i % events.len()]))
            .collect();
        SurvivalDataset::from_subjects(subjects).unwrap()
    }

    #[test]
    fn split_partitions_ten_into_five_and_five() {
        let data = toy(10, &[true]);
        let s = split(&data, 0.5, 7).unwrap();
        assert_eq!(s.train_ids.len(), 5);
        assert_eq!(s.calib_ids.len(), 5);
        let mut all: Vec<usize> = s.train_ids.iter().chain(&s.calib_ids).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_deterministic() {
        let data = toy(10, &[true, false]);
        let a = split(&data, 0.5, 7).unwrap();
        let b = split(&data, 0.5, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_rejects_all_censored() {
        let data = toy(4, &[false]);
        match split(&data, 0.5, 1) {
            Err(DataError::NoUncensoredCalibration { .. }) => {}
            other => panic!("expected NoUncensoredCalibration, got {other:?}"),
        }
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let data = toy(10, &[true]);
        assert!(split(&data, 0.0, 1).is_err());
        assert!(split(&data, 1.0, 1).is_err());
    }

    #[test]
    fn default_grid_spacing() {
        let subjects = vec![
            Subject::new(vec![0.0], 80.0, true),
            Subject::new(vec![1.0], 10.0, false),
        ];
        let data = SurvivalDataset::from_subjects(subjects).unwrap();
        let g = default_grid(&data, 5).unwrap();
        assert_eq!(g.points(), vec![0.0, 25.0, 50.0, 75.0, 100.0]);
        let g2 = default_grid(&data, 2).unwrap();
        assert_eq!(g2.points(), vec![0.0, 100.0]);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(matches!(
            SurvivalDataset::from_subjects(vec![]),
            Err(DataError::EmptyDataset)
        ));
    }

    #[test]
    fn nonpositive_time_is_rejected() {
        let r = SurvivalDataset::from_subjects(vec![Subject::new(vec![0.0], 0.0, true)]);
        assert!(matches!(r, Err(DataError::InvalidTime { .. })));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let r = SurvivalDataset::from_subjects(vec![
            Subject::new(vec![0.0, 1.0], 1.0, true),
            Subject::new(vec![0.0], 1.0, true),
        ]);
        assert!(matches!(r, Err(DataError::DimensionMismatch { .. })));
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let mut c = RunConfig::default();
        c.alpha = 1.5;
        assert!(c.validate().is_err());
        c = RunConfig::default();
        c.prob_clip = (0.5, 0.2);
        assert!(c.validate().is_err());
        c = RunConfig::default();
        c.censoring_cdf_cap = 1.0;
        assert!(c.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }
}
