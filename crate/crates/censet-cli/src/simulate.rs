//! `censet simulate`: run coverage-experiment scenarios and emit the
//! metrics CSV plus a markdown summary table.

use std::path::PathBuf;

use anyhow::{bail, Result};
use censet::sim::{
    metrics_csv, metrics_markdown, run_scenario, CensoringLevel, ErrorModel, GammaParam,
    MetricRow, NormalParam, ScenarioSpec,
};

use crate::config::CliConfig;
use crate::output::write_atomic;

pub struct SimulateArgs {
    pub table: Option<u8>,
    pub n: Option<usize>,
    pub censoring: Option<u32>,
    pub error_model: Option<ErrorModel>,
    pub shift: Option<bool>,
    pub reps: usize,
    pub n_test: usize,
    pub normal_param: NormalParam,
    pub gamma_param: GammaParam,
    pub out_dir: PathBuf,
}

fn parse_level(percent: u32) -> Result<CensoringLevel> {
    Ok(match percent {
        20 => CensoringLevel::C20,
        40 => CensoringLevel::C40,
        60 => CensoringLevel::C60,
        80 => CensoringLevel::C80,
        other => bail!("censoring level must be one of 20/40/60/80, got {other}"),
    })
}

/// The scenario grid for a run: either one of the two standard table
/// layouts or a single custom cell.
fn scenarios(args: &SimulateArgs, config: &CliConfig) -> Result<Vec<ScenarioSpec>> {
    let mut base = Vec::new();
    match args.table {
        Some(1) => {
            for n in [300, 800] {
                for em in [ErrorModel::Homoscedastic, ErrorModel::Heteroscedastic] {
                    for level in CensoringLevel::ALL {
                        base.push(ScenarioSpec::new(n, em, level, true));
                    }
                }
            }
        }
        Some(2) => {
            for em in [ErrorModel::Homoscedastic, ErrorModel::Heteroscedastic] {
                for level in CensoringLevel::ALL {
                    base.push(ScenarioSpec::new(300, em, level, false));
                }
            }
        }
        Some(other) => bail!("--table must be 1 or 2, got {other}"),
        None => {
            let n = args.n.unwrap_or(300);
            let em = args.error_model.unwrap_or(ErrorModel::Homoscedastic);
            let level = parse_level(args.censoring.unwrap_or(20))?;
            base.push(ScenarioSpec::new(n, em, level, args.shift.unwrap_or(false)));
        }
    }
    for spec in &mut base {
        spec.n_reps = args.reps;
        spec.n_test = args.n_test;
        spec.alpha = config.alpha;
        spec.base_seed = config.seed;
        spec.split_fraction = config.split_fraction;
        spec.censoring_cap = config.censoring_cap;
        spec.normal_param = args.normal_param;
        spec.gamma_param = args.gamma_param;
        if let Some(t_max) = config.grid_t_max {
            spec.grid_t_max = t_max;
        }
    }
    Ok(base)
}

pub fn run(args: &SimulateArgs, config: &CliConfig) -> Result<()> {
    if args.reps == 0 {
        bail!("--reps must be at least 1");
    }
    let specs = scenarios(args, config)?;
    let mut rows: Vec<MetricRow> = Vec::new();
    for spec in &specs {
        eprintln!(
            "running n={} {} {}% shift={} ({} reps)...",
            spec.n,
            spec.error_model.label(),
            spec.censoring_level.percent(),
            spec.shift,
            spec.n_reps
        );
        let (weighted, plain) = run_scenario(spec)?;
        rows.push(weighted);
        rows.push(plain);
    }
    let header = config.echo(&[
        ("command", "simulate".to_string()),
        ("reps", args.reps.to_string()),
        ("n_test", args.n_test.to_string()),
        (
            "normal_param",
            format!("{:?}", args.normal_param).to_lowercase(),
        ),
        (
            "gamma_param",
            format!("{:?}", args.gamma_param).to_lowercase(),
        ),
    ]);
    let csv = format!("{header}{}", metrics_csv(&rows));
    let title = match args.table {
        Some(1) => "Coverage under covariate shift".to_string(),
        Some(2) => "Coverage without covariate shift".to_string(),
        _ => "Coverage".to_string(),
    };
    let md = format!("<!--\n{header}-->\n\n{}", metrics_markdown(&rows, &title));
    write_atomic(&args.out_dir.join("metrics.csv"), &csv)?;
    write_atomic(&args.out_dir.join("table.md"), &md)?;
    println!("{}", metrics_markdown(&rows, &title));
    eprintln!(
        "wrote {} and {}",
        args.out_dir.join("metrics.csv").display(),
        args.out_dir.join("table.md").display()
    );
    Ok(())
}
