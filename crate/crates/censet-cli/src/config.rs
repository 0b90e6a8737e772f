//! Run configuration shared by the CLI commands: a `key = value` text file
//! merged with command-line flag overrides. The effective configuration is
//! echoed into every output header so results can be traced to their
//! settings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use censet::csv_io::CsvSchema;
use censet::data::{CandidateGrid, RunConfig};

/// Everything a command needs to run: statistical settings, CSV schema,
/// seeding and parallelism.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub alpha: f64,
    pub split_fraction: f64,
    pub grid_points: usize,
    /// Explicit grid upper end; `None` derives 1.25 × max observed time.
    pub grid_t_max: Option<f64>,
    pub censoring_cap: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub bandwidth: Option<f64>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub time_column: String,
    pub event_column: String,
    pub id_column: Option<String>,
    pub features: Option<Vec<String>>,
    pub categorical_features: Vec<String>,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            split_fraction: 0.5,
            grid_points: 400,
            grid_t_max: None,
            censoring_cap: 0.99,
            clip_lo: 0.01,
            clip_hi: 0.99,
            bandwidth: None,
            seed: 1,
            threads: None,
            time_column: "time".to_string(),
            event_column: "event".to_string(),
            id_column: None,
            features: None,
            categorical_features: Vec::new(),
        }
    }
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut config = Self::default();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected 'key = value'", path.display(), lineno + 1))?;
            config
                .set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "alpha" => self.alpha = value.parse()?,
            "split_fraction" => self.split_fraction = value.parse()?,
            "grid_points" => self.grid_points = value.parse()?,
            "grid_t_max" => self.grid_t_max = Some(value.parse()?),
            "censoring_cap" => self.censoring_cap = value.parse()?,
            "clip_lo" => self.clip_lo = value.parse()?,
            "clip_hi" => self.clip_hi = value.parse()?,
            "bandwidth" => self.bandwidth = Some(value.parse()?),
            "seed" => self.seed = value.parse()?,
            "threads" => self.threads = Some(value.parse()?),
            "time_column" => self.time_column = value.to_string(),
            "event_column" => self.event_column = value.to_string(),
            "id_column" => self.id_column = Some(value.to_string()),
            "features" => self.features = Some(split_list(value)),
            "categorical_features" => self.categorical_features = split_list(value),
            other => bail!("unknown config key '{other}'"),
        }
        Ok(())
    }

    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            time_column: self.time_column.clone(),
            event_column: self.event_column.clone(),
            id_column: self.id_column.clone(),
            feature_columns: self.features.clone(),
            categorical_columns: self.categorical_features.clone(),
        }
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let grid = match self.grid_t_max {
            Some(t_max) => Some(CandidateGrid::new(0.0, t_max, self.grid_points)?),
            None => None,
        };
        let rc = RunConfig {
            alpha: self.alpha,
            grid,
            grid_points: self.grid_points,
            split_fraction: self.split_fraction,
            censoring_cdf_cap: self.censoring_cap,
            prob_clip: (self.clip_lo, self.clip_hi),
            bandwidth_override: self.bandwidth,
        };
        rc.validate()?;
        Ok(rc)
    }

    /// Worker-thread cap: explicit config wins, then `CENSET_THREADS`,
    /// otherwise the available cores.
    pub fn effective_threads(&self) -> Option<usize> {
        if self.threads.is_some() {
            return self.threads;
        }
        std::env::var("CENSET_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    }

    /// The provenance header echoed into every output file.
    pub fn echo(&self, extra: &[(&str, String)]) -> String {
        let mut map = BTreeMap::new();
        map.insert("alpha", self.alpha.to_string());
        map.insert("split_fraction", self.split_fraction.to_string());
        map.insert("grid_points", self.grid_points.to_string());
        if let Some(t) = self.grid_t_max {
            map.insert("grid_t_max", t.to_string());
        }
        map.insert("censoring_cap", self.censoring_cap.to_string());
        map.insert("clip_lo", self.clip_lo.to_string());
        map.insert("clip_hi", self.clip_hi.to_string());
        if let Some(h) = self.bandwidth {
            map.insert("bandwidth", h.to_string());
        }
        map.insert("seed", self.seed.to_string());
        map.insert("time_column", self.time_column.clone());
        map.insert("event_column", self.event_column.clone());
        if let Some(id) = &self.id_column {
            map.insert("id_column", id.clone());
        }
        if let Some(fs) = &self.features {
            map.insert("features", fs.join(","));
        }
        if !self.categorical_features.is_empty() {
            map.insert("categorical_features", self.categorical_features.join(","));
        }
        let mut out = String::new();
        for (k, v) in &map {
            let _ = writeln!(out, "# {k} = {v}");
        }
        for (k, v) in extra {
            let _ = writeln!(out, "# {k} = {v}");
        }
        out
    }
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parses_key_value_file() {
        let path = std::env::temp_dir().join(format!("censet_cfg_{}.txt", std::process::id()));
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# comment line").unwrap();
        writeln!(f, "alpha = 0.05").unwrap();
        writeln!(f, "features = age, size").unwrap();
        writeln!(f, "seed = 9  # trailing comment").unwrap();
        let cfg = CliConfig::load(&path).unwrap();
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.features, Some(vec!["age".to_string(), "size".to_string()]));
        assert_eq!(cfg.seed, 9);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn unknown_key_is_an_error() {
        let mut cfg = CliConfig::default();
        assert!(cfg.set("nonsense", "1").is_err());
    }

    #[test]
    fn echo_is_sorted_and_stable() {
        let cfg = CliConfig::default();
        let a = cfg.echo(&[]);
        let b = cfg.echo(&[]);
        assert_eq!(a, b);
        assert!(a.contains("# alpha = 0.1"));
    }
}
