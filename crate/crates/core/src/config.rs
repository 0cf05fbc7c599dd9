//! Experiment configuration: a TOML file, defaults for every key, and
//! command-line overrides layered on top.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolution::SocietyConfig;
use crate::optimizer::SimplexOptions;
use crate::strategies::{AllocationOptions, StrategyKind};

pub const DEFAULT_SEED: u64 = 20_240_601;

/// On-disk encoding of run logs and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config { key: "format".into(), reason: format!("expected csv or json, got `{other}`") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub strategies: Vec<StrategyKind>,
    pub societies: u64,
    pub generations: u32,
    pub initial_population: usize,
    pub gamma_rate: f64,
    pub mortality_mid: f64,
    pub mortality_scale: f64,
    pub mutation_sd: f64,
    pub k_max: u32,
    pub population_cap: usize,
    pub myopic_floor_hours: f64,
    pub warm_start: bool,
    pub output_dir: PathBuf,
    pub format: OutputFormat,
    /// Worker threads; `None` uses all available cores.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub optimizer: SimplexOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let society = SocietyConfig::default();
        Self {
            master_seed: DEFAULT_SEED,
            strategies: StrategyKind::ALL.to_vec(),
            societies: 100,
            generations: 100,
            initial_population: society.initial_population,
            gamma_rate: society.gamma_rate,
            mortality_mid: society.mortality_mid,
            mortality_scale: society.mortality_scale,
            mutation_sd: society.mutation_sd,
            k_max: society.k_max,
            population_cap: society.population_cap,
            myopic_floor_hours: society.allocation.myopic_floor_hours,
            warm_start: society.allocation.warm_start,
            output_dir: PathBuf::from("fairsim-out"),
            format: OutputFormat::Csv,
            workers: None,
            optimizer: society.allocation.simplex,
        }
    }
}

/// Values given on the command line; each one wins over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub strategies: Option<Vec<StrategyKind>>,
    pub societies: Option<u64>,
    pub generations: Option<u32>,
    pub initial_population: Option<usize>,
    pub master_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub workers: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = &self.strategies {
            cfg.strategies = s.clone();
        }
        if let Some(v) = self.societies {
            cfg.societies = v;
        }
        if let Some(v) = self.generations {
            cfg.generations = v;
        }
        if let Some(v) = self.initial_population {
            cfg.initial_population = v;
        }
        if let Some(v) = self.master_seed {
            cfg.master_seed = v;
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.format {
            cfg.format = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = Some(v);
        }
    }
}

/// Parses `--strategy` values: `all`, a single label, or a comma list.
pub fn parse_strategy_list(s: &str) -> Result<Vec<StrategyKind>> {
    if s.trim() == "all" {
        return Ok(StrategyKind::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in s.split(',') {
        let kind = part
            .trim()
            .parse::<StrategyKind>()
            .map_err(|e| Error::Config { key: "strategies".into(), reason: e.to_string() })?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    Ok(out)
}

fn field<T: DeserializeOwned>(key: &str, value: toml::Value) -> Result<T> {
    value.try_into().map_err(|e: toml::de::Error| Error::Config { key: key.into(), reason: e.message().trim().to_string() })
}

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config { key: key.into(), reason: reason.into() }
}

fn apply_optimizer(opts: &mut SimplexOptions, table: toml::Table) -> Result<()> {
    for (key, value) in table {
        let path = format!("optimizer.{key}");
        match key.as_str() {
            "max_iterations" => opts.max_iterations = field(&path, value)?,
            "tolerance" => opts.tolerance = field(&path, value)?,
            "restarts" => opts.restarts = field(&path, value)?,
            "reflection" => opts.reflection = field(&path, value)?,
            "expansion" => opts.expansion = field(&path, value)?,
            "contraction" => opts.contraction = field(&path, value)?,
            "shrink" => opts.shrink = field(&path, value)?,
            "block_size" => opts.block_size = field(&path, value)?,
            _ => return Err(config_err(&path, "unknown key")),
        }
    }
    Ok(())
}

/// Builds the effective configuration from file contents (may be empty) and
/// command-line overrides, then range-checks every field.
pub fn parse_config(contents: &str, overrides: &Overrides) -> Result<ExperimentConfig> {
    let table: toml::Table =
        contents.parse().map_err(|e: toml::de::Error| config_err("<file>", e.message().trim().to_string()))?;
    let mut cfg = ExperimentConfig::default();
    for (key, value) in table {
        match key.as_str() {
            "master_seed" => cfg.master_seed = field(&key, value)?,
            "strategies" => {
                cfg.strategies = match value {
                    toml::Value::String(s) => parse_strategy_list(&s)?,
                    other => field(&key, other)?,
                }
            }
            "societies" => cfg.societies = field(&key, value)?,
            "generations" => cfg.generations = field(&key, value)?,
            "initial_population" => cfg.initial_population = field(&key, value)?,
            "gamma_rate" => cfg.gamma_rate = field(&key, value)?,
            "mortality_mid" => cfg.mortality_mid = field(&key, value)?,
            "mortality_scale" => cfg.mortality_scale = field(&key, value)?,
            "mutation_sd" => cfg.mutation_sd = field(&key, value)?,
            "k_max" => cfg.k_max = field(&key, value)?,
            "population_cap" => cfg.population_cap = field(&key, value)?,
            "myopic_floor_hours" => cfg.myopic_floor_hours = field(&key, value)?,
            "warm_start" => cfg.warm_start = field(&key, value)?,
            "output_dir" => cfg.output_dir = field(&key, value)?,
            "format" => cfg.format = field(&key, value)?,
            "workers" => cfg.workers = Some(field(&key, value)?),
            "optimizer" => match value {
                toml::Value::Table(t) => apply_optimizer(&mut cfg.optimizer, t)?,
                _ => return Err(config_err("optimizer", "expected a table")),
            },
            _ => return Err(config_err(&key, "unknown key")),
        }
    }
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(key, format!("must be a positive finite number, got {v}")))
            }
        };
        if self.strategies.is_empty() {
            return Err(config_err("strategies", "at least one strategy is required"));
        }
        if self.societies == 0 {
            return Err(config_err("societies", "must be >= 1"));
        }
        if self.generations == 0 {
            return Err(config_err("generations", "must be >= 1"));
        }
        if self.initial_population == 0 {
            return Err(config_err("initial_population", "must be >= 1"));
        }
        positive("gamma_rate", self.gamma_rate)?;
        positive("mortality_mid", self.mortality_mid)?;
        positive("mortality_scale", self.mortality_scale)?;
        if !(self.mutation_sd >= 0.0 && self.mutation_sd.is_finite()) {
            return Err(config_err("mutation_sd", "must be a non-negative finite number"));
        }
        if self.k_max == 0 {
            return Err(config_err("k_max", "must be >= 1"));
        }
        if self.population_cap == 0 {
            return Err(config_err("population_cap", "must be >= 1"));
        }
        if !(self.myopic_floor_hours >= 0.0 && self.myopic_floor_hours <= 24.0) {
            return Err(config_err("myopic_floor_hours", "must lie in [0, 24]"));
        }
        if self.workers == Some(0) {
            return Err(config_err("workers", "must be >= 1"));
        }
        self.optimizer.validate().map_err(|e| match e {
            Error::Parameter { name, reason } => config_err(&format!("optimizer.{name}"), reason),
            other => other,
        })
    }

    pub fn society_config(&self) -> SocietyConfig {
        SocietyConfig {
            initial_population: self.initial_population,
            gamma_rate: self.gamma_rate,
            mortality_mid: self.mortality_mid,
            mortality_scale: self.mortality_scale,
            k_max: self.k_max,
            mutation_sd: self.mutation_sd,
            population_cap: self.population_cap,
            allocation: AllocationOptions {
                simplex: self.optimizer,
                myopic_floor_hours: self.myopic_floor_hours,
                warm_start: self.warm_start,
            },
        }
    }

    /// Strategies to execute: the selection plus Strategy 0, which every
    /// index in the report is measured against. Canonical order.
    pub fn executed_strategies(&self) -> Vec<StrategyKind> {
        StrategyKind::ALL
            .into_iter()
            .filter(|k| *k == StrategyKind::S0 || self.strategies.contains(k))
            .collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::State(format!("cannot serialize configuration: {e}")))
    }

    /// SHA-256 over the settings that determine simulation output. The
    /// output location and worker count are left out since neither changes
    /// a single logged value.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.workers = None;
        canonical.strategies = self.executed_strategies();
        let text = toml::to_string(&canonical).unwrap_or_default();
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(err: Error) -> String {
        match err {
            Error::Config { key, .. } => key,
            other => panic!("expected a configuration error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config("", &Overrides::default()).unwrap();
        assert_eq!(cfg.societies, 100);
        assert_eq!(cfg.generations, 100);
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn flags_override_file() {
        let o = Overrides { generations: Some(10), ..Default::default() };
        let cfg = parse_config("generations = 30", &o).unwrap();
        assert_eq!(cfg.generations, 10);
        let cfg = parse_config("generations = 30", &Overrides::default()).unwrap();
        assert_eq!(cfg.generations, 30);
    }

    #[test]
    fn errors_name_the_key() {
        let none = Overrides::default();
        assert_eq!(key_of(parse_config("societies = 0", &none).unwrap_err()), "societies");
        assert_eq!(key_of(parse_config("societes = 3", &none).unwrap_err()), "societes");
        assert_eq!(key_of(parse_config("generations = \"ten\"", &none).unwrap_err()), "generations");
        assert_eq!(key_of(parse_config("master_seed = -1", &none).unwrap_err()), "master_seed");
        assert_eq!(key_of(parse_config("[optimizer]\nrestart = 2", &none).unwrap_err()), "optimizer.restart");
        assert_eq!(key_of(parse_config("[optimizer]\ntolerance = 0.0", &none).unwrap_err()), "optimizer.tolerance");
        assert_eq!(key_of(parse_config("strategies = [\"C\"]", &none).unwrap_err()), "strategies");
        assert_eq!(key_of(parse_config("format = \"xml\"", &none).unwrap_err()), "format");
        assert_eq!(key_of(parse_config("mutation_sd = -0.1", &none).unwrap_err()), "mutation_sd");
    }

    #[test]
    fn strategy_lists() {
        assert_eq!(parse_strategy_list("all").unwrap(), StrategyKind::ALL.to_vec());
        assert_eq!(parse_strategy_list("Ab,0").unwrap(), vec![StrategyKind::SAb, StrategyKind::S0]);
        let cfg = parse_config("strategies = \"Ab\"", &Overrides::default()).unwrap();
        assert_eq!(cfg.executed_strategies(), vec![StrategyKind::S0, StrategyKind::SAb]);
    }

    #[test]
    fn toml_round_trip() {
        let o = Overrides {
            societies: Some(7),
            workers: Some(3),
            format: Some(OutputFormat::Json),
            strategies: Some(vec![StrategyKind::Sb]),
            ..Default::default()
        };
        let cfg = parse_config("[optimizer]\nrestarts = 2\n", &o).unwrap();
        let again = parse_config(&cfg.to_toml().unwrap(), &Overrides::default()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.digest(), again.digest());
    }

    #[test]
    fn digest_ignores_placement_but_not_settings() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { workers: Some(8), output_dir: "elsewhere".into(), ..a.clone() };
        let c = ExperimentConfig { master_seed: 1, ..a.clone() };
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
