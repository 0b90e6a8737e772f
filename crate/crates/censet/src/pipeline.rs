//! End-to-end split conformal pipeline: fit nuisance models on the training
//! split, score the calibration split, and evaluate p-value curves for new
//! covariate vectors.

use thiserror::Error;

use crate::conformal::{pvalue_curve_from_parts, quantile_band, CalibrationScores, PValueCurve};
use crate::data::{CandidateGrid, DataError, RunConfig, SplitIndex, SurvivalDataset};
use crate::density_ratio::{fit_ratio, DensityRatioModel, RatioError, ShiftWeight};
use crate::kernel::{bandwidth_rule, ConditionalCdf, Kernel, KernelError, KernelSpec, LocalizedKaplanMeier};
use crate::quantile::{fit_pair, QuantileError, QuantilePair};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Quantile(#[from] QuantileError),
    #[error(transparent)]
    Ratio(#[from] RatioError),
}

/// The models fitted on the training split: quantile band predictors and
/// the conditional censoring distribution.
pub struct BaseModels {
    pub pair: QuantilePair,
    pub censoring: LocalizedKaplanMeier,
    pub grid: CandidateGrid,
    pub alpha: f64,
}

/// Fit quantile pair and censoring model on the training split.
///
/// Bandwidths follow the effective-sample-size rule computed on the full
/// dataset (censored count for `Ĝ`, uncensored count for `F̂`) unless the
/// config overrides them.
pub fn fit_base_models(
    data: &SurvivalDataset,
    split: &SplitIndex,
    config: &RunConfig,
) -> Result<BaseModels, PipelineError> {
    config.validate()?;
    let train = data.subset(&split.train_ids);
    let n_censored = data.len() - data.n_events();
    let h_censoring = config
        .bandwidth_override
        .unwrap_or_else(|| bandwidth_rule(n_censored));
    let h_event = config
        .bandwidth_override
        .unwrap_or_else(|| bandwidth_rule(data.n_events()));
    let censoring = LocalizedKaplanMeier::censoring(
        &train,
        KernelSpec::new(h_censoring, Kernel::Gaussian)?,
        config.censoring_cdf_cap,
    )?;
    let event_spec = KernelSpec::new(h_event, Kernel::Gaussian)?;
    let pair = fit_pair(&train, config.alpha, event_spec, Some(&censoring))?;
    let grid = config.resolve_grid(data)?;
    Ok(BaseModels {
        pair,
        censoring,
        grid,
        alpha: config.alpha,
    })
}

impl BaseModels {
    /// Score the calibration split, with or without shift factors.
    pub fn calibration_scores(
        &self,
        data: &SurvivalDataset,
        split: &SplitIndex,
        ratio: Option<&DensityRatioModel>,
    ) -> CalibrationScores {
        let calib = data.subset(&split.calib_ids);
        CalibrationScores::from_calibration(&calib, &self.pair, &self.censoring, ratio)
    }

    /// The p-value curve for a new covariate vector.
    pub fn curve(
        &self,
        scores: &CalibrationScores,
        ratio: Option<&DensityRatioModel>,
        x_new: &[f64],
    ) -> PValueCurve {
        let band = quantile_band(&self.pair, x_new);
        let shift_new = ratio.map_or(1.0, |r| r.weight(x_new));
        let ts = self.grid.points();
        let g_curve = self.censoring.cdf_curve(&ts, x_new);
        pvalue_curve_from_parts(scores, band, shift_new, &g_curve, &self.grid, self.alpha)
    }
}

/// A complete fitted pipeline bundled with its calibration scores.
pub struct FittedPipeline {
    pub models: BaseModels,
    pub scores: CalibrationScores,
    pub ratio: Option<DensityRatioModel>,
}

/// Fit the full pipeline. Supplying `test_covariates` enables the
/// covariate-shift weighting: the density-ratio classifier is trained on
/// all observed covariates (both splits) against the test batch.
pub fn fit_pipeline(
    data: &SurvivalDataset,
    split: &SplitIndex,
    config: &RunConfig,
    test_covariates: Option<&[Vec<f64>]>,
    seed: u64,
) -> Result<FittedPipeline, PipelineError> {
    let models = fit_base_models(data, split, config)?;
    let ratio = match test_covariates {
        Some(test) => Some(fit_ratio(
            &data.covariates(),
            test,
            seed,
            config.prob_clip,
        )?),
        None => None,
    };
    let scores = models.calibration_scores(data, split, ratio.as_ref());
    Ok(FittedPipeline {
        models,
        scores,
        ratio,
    })
}

impl FittedPipeline {
    pub fn curve_for(&self, x_new: &[f64]) -> PValueCurve {
        self.models.curve(&self.scores, self.ratio.as_ref(), x_new)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, Subject};
    use crate::rng::seeded_rng;
    use rand::Rng;

    fn synthetic(n: usize, seed: u64) -> SurvivalDataset {
        let mut rng = seeded_rng(seed);
        let subjects = (0..n)
            .map(|_| {
                let x = vec![rng.gen::<f64>(), rng.gen::<f64>()];
                let t = (1.0 + x[0] + 0.3 * rng.gen::<f64>()).exp();
                let c = 1.0 + 8.0 * rng.gen::<f64>();
                Subject::new(x.clone(), t.min(c), t <= c)
            })
            .collect();
        SurvivalDataset::from_subjects(subjects).unwrap()
    }

    #[test]
    fn pipeline_fits_and_predicts() {
        let data = synthetic(120, 3);
        let idx = split(&data, 0.5, 11).unwrap();
        let config = RunConfig {
            grid_points: 60,
            ..RunConfig::default()
        };
        let pipeline = fit_pipeline(&data, &idx, &config, None, 5).unwrap();
        let curve = pipeline.curve_for(&[0.5, 0.5]);
        assert_eq!(curve.values.len(), 60);
        assert!(curve.values.iter().all(|&p| (0.0..=1.0).contains(&p)));
        assert!(curve.values.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn weighted_pipeline_attaches_ratio() {
        let data = synthetic(100, 7);
        let idx = split(&data, 0.5, 13).unwrap();
        let mut rng = seeded_rng(21);
        let test: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()])
            .collect();
        let config = RunConfig {
            grid_points: 50,
            ..RunConfig::default()
        };
        let pipeline = fit_pipeline(&data, &idx, &config, Some(&test), 5).unwrap();
        assert!(pipeline.ratio.is_some());
        let curve = pipeline.curve_for(&test[0]);
        assert!(!curve.values.is_empty());
    }
}
