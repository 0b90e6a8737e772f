//! censet: censoring-adjusted split conformal prediction for right-censored
//! survival times, with covariate-shift weighting.
//!
//! Subcommands: `predict` (external-cohort intervals), `simulate` (coverage
//! experiments), `diagnose` (p-value curve inspection). All randomness flows
//! from `--seed`; reruns with identical flags and inputs produce
//! byte-identical outputs.

mod config;
mod diagnose;
mod output;
mod predict;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Result};
use censet::sim::{ErrorModel, GammaParam, NormalParam};

use config::CliConfig;

const USAGE: &str = "\
censet — censoring-adjusted split conformal prediction

USAGE:
  censet predict --train FILE --test FILE [--out DIR] [options]
  censet simulate (--table 1|2 | --n N --censoring PCT [--shift]) --reps R [options]
  censet diagnose --train FILE --subjects ID[,ID...] [--out DIR] [options]

COMMON OPTIONS:
  --config FILE          key = value settings file (flags override it)
  --seed N               master seed (default 1)
  --alpha A              target miscoverage (default 0.1)
  --split F              training fraction of the split (default 0.5)
  --grid-points N        candidate grid resolution (default 400)
  --grid-max T           candidate grid upper end (default 1.25 x max time)
  --cap C                censoring-cdf truncation (default 0.99)
  --clip LO,HI           classifier probability clip (default 0.01,0.99)
  --bandwidth H          kernel bandwidth override
  --time-column NAME     (default time)      --event-column NAME (default event)
  --id-column NAME       optional subject id column
  --features A,B,...     feature columns (default: all others)
  --categorical A,B,...  feature columns to one-hot encode
  --threads N            worker thread cap
  --out DIR              output directory (default .)

predict:
  --no-shift-weights     plain censoring-adjusted SCP (no density ratio)

simulate:
  --table 1|2            standard scenario grids (shift / no-shift)
  --n N --censoring PCT --error-model homo|hetero [--shift|--no-shift]
  --reps R --n-test M    replications and per-replication test size
  --normal-param sd|variance    reading of the homoscedastic error scale
  --gamma-param rate|scale      reading of the heteroscedastic second parameter

Environment: CENSET_THREADS caps worker parallelism (default: all cores).
";

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

struct Flags {
    positional: Vec<String>,
    pairs: Vec<(String, Option<String>)>,
}

impl Flags {
    fn parse(args: &[String]) -> Flags {
        let mut positional = Vec::new();
        let mut pairs = Vec::new();
        let mut it = args.iter().peekable();
        while let Some(arg) = it.next() {
            if let Some(name) = arg.strip_prefix("--") {
                let value = match it.peek() {
                    Some(next) if !next.starts_with("--") => Some(it.next().unwrap().clone()),
                    _ => None,
                };
                pairs.push((name.to_string(), value));
            } else {
                positional.push(arg.clone());
            }
        }
        Flags { positional, pairs }
    }

    fn take(&mut self, name: &str) -> Option<Option<String>> {
        let idx = self.pairs.iter().position(|(n, _)| n == name)?;
        Some(self.pairs.remove(idx).1)
    }

    fn value(&mut self, name: &str) -> Result<Option<String>> {
        match self.take(name) {
            None => Ok(None),
            Some(Some(v)) => Ok(Some(v)),
            Some(None) => bail!("--{name} requires a value"),
        }
    }

    fn switch(&mut self, name: &str) -> bool {
        self.take(name).is_some()
    }

    fn finish(&self) -> Result<()> {
        if let Some((name, _)) = self.pairs.first() {
            bail!("unknown flag --{name} (see --help)");
        }
        if let Some(extra) = self.positional.first() {
            bail!("unexpected argument '{extra}'");
        }
        Ok(())
    }
}

fn run() -> Result<()> {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    if argv.is_empty() || argv[0] == "--help" || argv[0] == "-h" || argv[0] == "help" {
        print!("{USAGE}");
        return Ok(());
    }
    let command = argv[0].clone();
    let mut flags = Flags::parse(&argv[1..]);

    let mut config = match flags.value("config")? {
        Some(path) => CliConfig::load(PathBuf::from(path).as_path())?,
        None => CliConfig::default(),
    };
    override_config(&mut config, &mut flags)?;
    if let Some(threads) = config.effective_threads() {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    let out_dir = PathBuf::from(flags.value("out")?.unwrap_or_else(|| ".".to_string()));

    match command.as_str() {
        "predict" => {
            let args = predict::PredictArgs {
                train: required_path(&mut flags, "train")?,
                test: required_path(&mut flags, "test")?,
                out_dir,
                shift_weights: !flags.switch("no-shift-weights"),
            };
            flags.finish()?;
            predict::run(&args, &config)
        }
        "simulate" => {
            let table = flags.value("table")?.map(|v| v.parse::<u8>()).transpose()?;
            let shift = if flags.switch("shift") {
                Some(true)
            } else if flags.switch("no-shift") {
                Some(false)
            } else {
                None
            };
            let args = simulate::SimulateArgs {
                table,
                n: flags.value("n")?.map(|v| v.parse()).transpose()?,
                censoring: flags.value("censoring")?.map(|v| v.parse()).transpose()?,
                error_model: flags
                    .value("error-model")?
                    .map(|v| parse_error_model(&v))
                    .transpose()?,
                shift,
                reps: flags
                    .value("reps")?
                    .ok_or_else(|| anyhow!("simulate requires --reps"))?
                    .parse()?,
                n_test: flags
                    .value("n-test")?
                    .map(|v| v.parse())
                    .transpose()?
                    .unwrap_or(100),
                normal_param: match flags.value("normal-param")?.as_deref() {
                    None | Some("sd") => NormalParam::StdDev,
                    Some("variance") => NormalParam::Variance,
                    Some(other) => bail!("--normal-param must be sd or variance, got {other}"),
                },
                gamma_param: match flags.value("gamma-param")?.as_deref() {
                    None | Some("rate") => GammaParam::Rate,
                    Some("scale") => GammaParam::Scale,
                    Some(other) => bail!("--gamma-param must be rate or scale, got {other}"),
                },
                out_dir,
            };
            flags.finish()?;
            simulate::run(&args, &config)
        }
        "diagnose" => {
            let args = diagnose::DiagnoseArgs {
                train: required_path(&mut flags, "train")?,
                subjects: flags
                    .value("subjects")?
                    .ok_or_else(|| anyhow!("diagnose requires --subjects"))?
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect(),
                out_dir,
            };
            flags.finish()?;
            diagnose::run(&args, &config)
        }
        other => bail!("unknown command '{other}' (run censet --help)"),
    }
}

fn required_path(flags: &mut Flags, name: &str) -> Result<PathBuf> {
    flags
        .value(name)?
        .map(PathBuf::from)
        .ok_or_else(|| anyhow!("missing required flag --{name}"))
}

fn parse_error_model(value: &str) -> Result<ErrorModel> {
    match value {
        "homo" | "homoscedastic" => Ok(ErrorModel::Homoscedastic),
        "hetero" | "heteroscedastic" => Ok(ErrorModel::Heteroscedastic),
        other => bail!("--error-model must be homo or hetero, got {other}"),
    }
}

fn override_config(config: &mut CliConfig, flags: &mut Flags) -> Result<()> {
    let mappings: [(&str, &str); 12] = [
        ("seed", "seed"),
        ("alpha", "alpha"),
        ("split", "split_fraction"),
        ("grid-points", "grid_points"),
        ("grid-max", "grid_t_max"),
        ("cap", "censoring_cap"),
        ("bandwidth", "bandwidth"),
        ("time-column", "time_column"),
        ("event-column", "event_column"),
        ("id-column", "id_column"),
        ("features", "features"),
        ("categorical", "categorical_features"),
    ];
    for (flag, key) in mappings {
        if let Some(v) = flags.value(flag)? {
            config.set(key, &v)?;
        }
    }
    if let Some(v) = flags.value("clip")? {
        let (lo, hi) = v
            .split_once(',')
            .ok_or_else(|| anyhow!("--clip expects LO,HI"))?;
        config.set("clip_lo", lo.trim())?;
        config.set("clip_hi", hi.trim())?;
    }
    if let Some(v) = flags.value("threads")? {
        config.set("threads", &v)?;
    }
    Ok(())
}
