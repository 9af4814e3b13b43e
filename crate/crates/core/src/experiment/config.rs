use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::SolverConfig;
use crate::lowrank::FgdConfig;
use crate::sim::{default_checkpoints, EnvironmentSpec, Experiment, PolicySpec, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown format `{other}` (expected csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub format: OutputFormat,
}

fn default_scale() -> f64 {
    10.0
}

fn default_replications() -> usize {
    20
}

fn default_scenario() -> Scenario {
    Scenario::LowRank
}

/// A synthetic experiment: one environment family, several policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// User feature dimension.
    pub d1: usize,
    /// Item feature dimension.
    pub d2: usize,
    pub n_items: usize,
    pub capacity: usize,
    /// True rank; defaults to `min(3, d1, d2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default = "default_scenario")]
    pub scenario: Scenario,
    #[serde(default = "default_scale")]
    pub singular_scale: f64,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Replication `i` runs with seed `seed + i`.
    #[serde(default)]
    pub seed: u64,
    pub policies: Vec<PolicySpec>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn rank(&self) -> usize {
        self.rank.unwrap_or_else(|| 3.min(self.d1).min(self.d2))
    }

    pub fn checkpoints(&self) -> Vec<usize> {
        self.checkpoints
            .clone()
            .unwrap_or_else(|| default_checkpoints(self.horizon))
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.replications as u64)
            .map(|i| self.seed.wrapping_add(i))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d1 == 0 || self.d2 == 0 || self.n_items == 0 {
            return bad("d1, d2 and n_items must be positive".into());
        }
        if self.capacity == 0 || self.capacity > self.n_items {
            return bad(format!(
                "capacity K = {} must satisfy 1 <= K <= N = {}",
                self.capacity, self.n_items
            ));
        }
        let r = self.rank();
        if r == 0 || r > self.d1.min(self.d2) {
            return bad(format!("rank {r} must lie in 1..={}", self.d1.min(self.d2)));
        }
        if !(self.singular_scale > 0.0) || !self.singular_scale.is_finite() {
            return bad("singular_scale must be positive".into());
        }
        validate_run(self.horizon, &self.checkpoints(), self.replications, &self.policies)
    }

    pub fn experiment(&self) -> Experiment {
        Experiment {
            environment: EnvironmentSpec::Synthetic {
                d1: self.d1,
                d2: self.d2,
                n_items: self.n_items,
                capacity: self.capacity,
                rank: self.rank(),
                singular_scale: self.singular_scale,
                scenario: self.scenario,
            },
            policies: self.policies.clone(),
            horizon: self.horizon,
            checkpoints: self.checkpoints(),
        }
    }
}

pub(crate) fn validate_run(horizon: usize, checkpoints: &[usize], replications: usize, policies: &[PolicySpec]) -> Result<()> {
    let bad = |m: String| Err(Error::Config(m));
    if horizon == 0 {
        return bad("horizon T must be at least 1".into());
    }
    if replications == 0 {
        return bad("replications R must be at least 1".into());
    }
    if checkpoints.is_empty() {
        return bad("checkpoints must not be empty".into());
    }
    if let Some(c) = checkpoints.iter().find(|&&c| c == 0 || c > horizon) {
        return bad(format!("checkpoint {c} must lie in 1..=T = {horizon}"));
    }
    if policies.is_empty() {
        return bad("policies must list at least one policy".into());
    }
    let mut names: Vec<String> = policies.iter().map(PolicySpec::display_name).collect();
    names.sort();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return bad(format!("policy name `{}` appears twice; set distinct names", w[0]));
    }
    for p in policies {
        p.config.validate()?;
    }
    Ok(())
}

/// Replay of a logged dataset: fit a truth on it, then simulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    pub items_csv: PathBuf,
    pub interactions_csv: PathBuf,
    /// Candidate ranks; defaults to `1..=min(d1, d2, 10)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_grid: Option<Vec<usize>>,
    /// Defaults to the largest logged assortment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<usize>,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    pub policies: Vec<PolicySpec>,
    #[serde(default)]
    pub fgd: FgdConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ReplayConfig {
    pub fn checkpoints(&self) -> Vec<usize> {
        self.checkpoints
            .clone()
            .unwrap_or_else(|| default_checkpoints(self.horizon))
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.replications as u64)
            .map(|i| self.seed.wrapping_add(i))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(grid) = &self.rank_grid {
            if grid.is_empty() || grid.contains(&0) {
                return Err(Error::Config("rank_grid must be nonempty with positive ranks".into()));
            }
        }
        if self.capacity == Some(0) {
            return Err(Error::Config("capacity must be at least 1".into()));
        }
        self.fgd.validate()?;
        self.solver.validate()?;
        validate_run(self.horizon, &self.checkpoints(), self.replications, &self.policies)
    }

    /// Resolves relative dataset paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.items_csv, &mut self.interactions_csv] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(config_error)?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config_str(&std::fs::read_to_string(path)?)
}

pub fn parse_replay_config_str(text: &str) -> Result<ReplayConfig> {
    let config: ReplayConfig = serde_json::from_str(text).map_err(config_error)?;
    config.validate()?;
    Ok(config)
}

/// Parses a replay config; dataset paths are taken relative to the config file.
pub fn parse_replay_config(path: &Path) -> Result<ReplayConfig> {
    let mut config = parse_replay_config_str(&std::fs::read_to_string(path)?)?;
    if let Some(dir) = path.parent() {
        config.resolve_paths(dir);
    }
    Ok(config)
}

fn config_error(e: serde_json::Error) -> Error {
    Error::Config(e.to_string())
}
