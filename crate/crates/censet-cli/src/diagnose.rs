//! `censet diagnose`: emit the full p-value curve for selected subjects so
//! the quasi-concavity shape can be inspected or plotted externally.
//!
//! Each selected subject is held out, the pipeline is fitted on the
//! remaining rows, and the subject's covariates are treated as a new test
//! point. Curves are unweighted (no covariate-shift factor): the diagnostic
//! concerns the censoring-adjusted p-value shape.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use censet::csv_io::read_training;
use censet::data::{split, Subject, SurvivalDataset};
use censet::pipeline::fit_pipeline;
use censet::rng::derive_seed;

use crate::config::CliConfig;
use crate::output::write_atomic;

pub struct DiagnoseArgs {
    pub train: PathBuf,
    pub subjects: Vec<String>,
    pub out_dir: PathBuf,
}

pub fn run(args: &DiagnoseArgs, config: &CliConfig) -> Result<()> {
    if args.subjects.is_empty() {
        bail!("no subject selector given (--subjects id1,id2,...)");
    }
    let schema = config.schema();
    let (data, _, ids) = read_training(&args.train, &schema)?;
    let run_config = config.run_config()?;
    for wanted in &args.subjects {
        let Some(pos) = ids.iter().position(|id| id == wanted) else {
            bail!("subject id '{wanted}' not found in {}", args.train.display());
        };
        let target = data.subjects()[pos].clone();
        let rest: Vec<Subject> = data
            .subjects()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != pos)
            .map(|(_, s)| s.clone())
            .collect();
        let rest = SurvivalDataset::new(rest, data.feature_names().to_vec())
            .context("dataset too small after holding the subject out")?;
        let idx = split(&rest, run_config.split_fraction, config.seed)?;
        let pipeline = fit_pipeline(
            &rest,
            &idx,
            &run_config,
            None,
            derive_seed(config.seed, 202),
        )?;
        let curve = pipeline.curve_for(&target.covariates);
        let verdict = match (curve.verdict, curve.is_empty_set()) {
            (censet::conformal::Verdict::Violated, _) => "violated",
            (_, true) => "empty",
            _ => "quasi_concave",
        };
        let mut out = String::new();
        out.push_str(&config.echo(&[
            ("command", "diagnose".to_string()),
            ("subject_id", wanted.clone()),
            ("verdict", verdict.to_string()),
            (
                "shape_warning",
                curve.shape_warning.to_string(),
            ),
            (
                "fallback_lower",
                curve
                    .fallback_lower
                    .map_or(String::new(), |v| v.to_string()),
            ),
        ]));
        out.push_str("t,p\n");
        for (t, p) in curve.grid.points().iter().zip(&curve.values) {
            out.push_str(&format!("{t},{p}\n"));
        }
        let path = args.out_dir.join(format!("pcurve_{wanted}.csv"));
        write_atomic(&path, &out)?;
        eprintln!("wrote {} (verdict: {verdict})", path.display());
    }
    Ok(())
}
