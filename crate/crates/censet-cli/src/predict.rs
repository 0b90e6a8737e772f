//! `censet predict`: fit the pipeline on a training CSV, emit prediction
//! intervals for an external test CSV.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use censet::conformal::{pvalue_from_parts, quantile_band};
use censet::csv_io::{read_test, read_training, TestRow};
use censet::data::split;
use censet::density_ratio::ShiftWeight;
use censet::pipeline::fit_pipeline;
use censet::rng::derive_seed;

use crate::config::CliConfig;
use crate::output::write_atomic;

pub struct PredictArgs {
    pub train: PathBuf,
    pub test: PathBuf,
    pub out_dir: PathBuf,
    pub shift_weights: bool,
}

pub fn run(args: &PredictArgs, config: &CliConfig) -> Result<()> {
    let schema = config.schema();
    let (train_data, encoder, _) = read_training(&args.train, &schema)?;
    let test_rows = read_test(&args.test, &schema, &encoder)?;
    if test_rows.is_empty() {
        bail!("{}: test file has no rows", args.test.display());
    }
    let run_config = config.run_config()?;
    let idx = split(&train_data, run_config.split_fraction, config.seed)?;
    let test_covariates: Vec<Vec<f64>> = test_rows.iter().map(|r| r.covariates.clone()).collect();
    let ratio_input = if args.shift_weights {
        Some(test_covariates.as_slice())
    } else {
        None
    };
    let pipeline = fit_pipeline(
        &train_data,
        &idx,
        &run_config,
        ratio_input,
        derive_seed(config.seed, 101),
    )
    .context("pipeline fit failed")?;

    let mut records = String::new();
    records.push_str(&config.echo(&[
        ("command", "predict".to_string()),
        ("train", args.train.display().to_string()),
        ("test", args.test.display().to_string()),
        ("shift_weights", args.shift_weights.to_string()),
        (
            "grid",
            format!(
                "[{}, {}] x {}",
                pipeline.models.grid.t_min, pipeline.models.grid.t_max, pipeline.models.grid.n_points
            ),
        ),
    ]));
    records.push_str("subject_id,lower,upper,verdict,covered\n");

    let mut n_covered = 0usize;
    let mut n_events = 0usize;
    let mut length_sum = 0.0;
    let mut fallbacks = 0usize;
    let mut empties = 0usize;
    for row in &test_rows {
        let curve = pipeline.curve_for(&row.covariates);
        let covered = coverage_flag(&pipeline, row, &curve);
        if let Some(flag) = covered {
            n_events += 1;
            if flag {
                n_covered += 1;
            }
        }
        length_sum += curve.length();
        if curve.fallback_lower.is_some() {
            fallbacks += 1;
        }
        if curve.is_empty_set() {
            empties += 1;
        }
        let (lower, upper, verdict) = match (curve.reported_interval(), curve.fallback_lower) {
            (Some((lo, hi)), _) => (format!("{lo}"), format!("{hi}"), "quasi_concave"),
            (None, Some(lo)) => (format!("{lo}"), String::new(), "violated"),
            (None, None) => (String::new(), String::new(), "empty"),
        };
        let covered_str = match covered {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        records.push_str(&format!(
            "{},{},{},{},{}\n",
            row.id, lower, upper, verdict, covered_str
        ));
    }

    let predictions_path = args.out_dir.join("predictions.csv");
    write_atomic(&predictions_path, &records)?;

    let ac = if n_events > 0 {
        100.0 * n_covered as f64 / n_events as f64
    } else {
        f64::NAN
    };
    let al = length_sum / test_rows.len() as f64;
    let mut summary = String::new();
    summary.push_str(&config.echo(&[("command", "predict summary".to_string())]));
    summary.push_str(&format!(
        "method = {}\n",
        if args.shift_weights { "weighted_scp" } else { "scp" }
    ));
    summary.push_str(&format!("test_rows = {}\n", test_rows.len()));
    summary.push_str(&format!("uncensored_test_rows = {n_events}\n"));
    summary.push_str(&format!("avg_coverage_uncensored_pct = {ac:.2}\n"));
    summary.push_str(&format!("avg_interval_length = {al:.3}\n"));
    summary.push_str(&format!(
        "fallback_fraction = {:.4}\n",
        fallbacks as f64 / test_rows.len() as f64
    ));
    summary.push_str(&format!(
        "empty_fraction = {:.4}\n",
        empties as f64 / test_rows.len() as f64
    ));
    let summary_path = args.out_dir.join("summary.txt");
    write_atomic(&summary_path, &summary)?;
    print!("{summary}");
    eprintln!(
        "wrote {} and {}",
        predictions_path.display(),
        summary_path.display()
    );
    Ok(())
}

/// Coverage for an uncensored test row by exact set membership at its
/// observed event time (the same accounting the simulation lab uses).
/// Censored rows and rows without outcome columns yield `None`.
fn coverage_flag(
    pipeline: &censet::pipeline::FittedPipeline,
    row: &TestRow,
    curve: &censet::conformal::PValueCurve,
) -> Option<bool> {
    let time = row.observed_time?;
    if !row.event? {
        return None;
    }
    let band = quantile_band(&pipeline.models.pair, &row.covariates);
    let shift = pipeline
        .ratio
        .as_ref()
        .map_or(1.0, |r| r.weight(&row.covariates));
    let g = censet::kernel::ConditionalCdf::cdf(&pipeline.models.censoring, time, &row.covariates);
    let p = pvalue_from_parts(&pipeline.scores, band, shift, g, time);
    Some(curve.covers_exact(time, p))
}
