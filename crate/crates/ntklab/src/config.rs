//! JSON run configuration, replay manifests, and output-root resolution.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sweep::{OptimizerKind, SweepConfig, DEFAULT_WIDTHS};
use crate::targets::TargetSpec;
use crate::training::AdamConfig;

/// Environment variable overriding the output root.
pub const OUT_ENV: &str = "NTKLAB_OUT";

fn default_widths() -> Vec<usize> {
    DEFAULT_WIDTHS.to_vec()
}

fn default_seeds() -> usize {
    20
}

fn default_base_seed() -> u64 {
    1
}

fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}

fn default_flow() -> FlowSection {
    FlowSection { horizon: 5.0 }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Gradient-flow options exposed in the config file; step size and
/// integrator follow the width-dependent defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowSection {
    pub horizon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    pub target: TargetSpec,
    #[serde(default = "default_widths")]
    pub widths: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub train_signs: bool,
    #[serde(default = "default_flow")]
    pub flow: FlowSection,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.to_sweep_config().validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_sweep_config(&self) -> SweepConfig {
        SweepConfig {
            widths: self.widths.clone(),
            seeds: self.seeds,
            base_seed: self.base_seed,
            optimizer: self.optimizer,
            train_signs: self.train_signs,
            flow_horizon: self.flow.horizon,
            adam: self.adam.clone(),
        }
    }

    /// `NTKLAB_OUT`, when set, wins over the config's output field.
    pub fn output_root(&self) -> PathBuf {
        match std::env::var_os(OUT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root),
            _ => self.output.clone(),
        }
    }
}

/// Everything needed to replay a run bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: Config,
    /// Fully derived per-run seeds, in record order.
    pub run_seeds: Vec<u64>,
}

impl Manifest {
    pub fn new(config: &Config) -> Self {
        let sweep = config.to_sweep_config();
        let mut run_seeds = Vec::with_capacity(sweep.widths.len() * sweep.seeds);
        for &m in &sweep.widths {
            for i in 0..sweep.seeds {
                run_seeds.push(sweep.run_seed(m, i));
            }
        }
        Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            run_seeds,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
