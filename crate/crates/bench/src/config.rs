//! Run configuration document (TOML).

use std::path::{Path, PathBuf};

use resplit_core::env::EnvConfig;
use resplit_core::problem::{GeneratorConfig, ScaleClass};
use resplit_policy::Td3Config;
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// Named obstacle densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Density {
    Sparse,
    Medium,
    Dense,
}

impl Density {
    pub fn rho(self) -> f64 {
        match self {
            Density::Sparse => 0.2,
            Density::Medium => 0.3,
            Density::Dense => 0.4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Density::Sparse => "sparse",
            Density::Medium => "medium",
            Density::Dense => "dense",
        }
    }
}

/// Where training instances come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    /// Directory of instance JSON files; generated on the fly when absent.
    pub dir: Option<PathBuf>,
    pub size: usize,
    pub first_seed: u64,
    pub density: Density,
    pub scale: ScaleClass,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            dir: None,
            size: 256,
            first_seed: 0,
            density: Density::Sparse,
            scale: ScaleClass::Short,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Environments stepped in lockstep.
    pub parallel_envs: usize,
    /// One trainer update per this many completed decision steps.
    pub update_every: usize,
    /// Periodic checkpoint interval in finished episodes (0 disables).
    pub checkpoint_every: usize,
    pub pool: PoolConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 10_000,
            parallel_envs: 8,
            update_every: 1,
            checkpoint_every: 1000,
            pool: PoolConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub trials: usize,
    /// First instance seed of the held-out evaluation range.
    pub first_seed: u64,
    pub densities: Vec<Density>,
    pub scales: Vec<ScaleClass>,
    /// Record wall-clock times; when false `time_ms` is written as 0 so the
    /// CSV is byte-stable across runs.
    pub wall_clock: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            trials: 50,
            first_seed: 1_000_000,
            densities: vec![Density::Sparse, Density::Medium, Density::Dense],
            scales: vec![ScaleClass::Short, ScaleClass::Medium, ScaleClass::Long],
            wall_clock: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub env: EnvConfig,
    pub td3: Td3Config,
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
    pub bench: BenchConfig,
}


impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let cfg_err = |e: String| BenchError::Config(e);
        self.env.solver.validate().map_err(|e| cfg_err(e.to_string()))?;
        self.env.reward.validate().map_err(cfg_err)?;
        if !(self.env.gate_threshold > -1.0 && self.env.gate_threshold < 1.0) {
            return Err(cfg_err("gate_threshold must lie in (-1, 1)".into()));
        }
        self.td3.validate().map_err(|e| cfg_err(e.to_string()))?;
        self.generator.validate().map_err(|e| cfg_err(e.to_string()))?;
        let t = &self.train;
        if t.episodes == 0 || t.parallel_envs == 0 || t.update_every == 0 {
            return Err(cfg_err("episodes, parallel_envs and update_every must be positive".into()));
        }
        if t.pool.dir.is_none() && t.pool.size == 0 {
            return Err(cfg_err("instance pool is empty".into()));
        }
        if self.bench.trials == 0 {
            return Err(cfg_err("trials must be positive".into()));
        }
        Ok(())
    }
}
