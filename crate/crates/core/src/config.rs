//! Run configuration: one TOML file covering every module's settings.
//!
//! Every field has a default, so an empty file is a valid configuration.
//! Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::drl::{Algo, TrainConfig};
use crate::env::EnvConfig;
use crate::eval::EvalConfig;
use crate::mobil::MobilParams;
use crate::scenarios::TrafficConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root under which run directories are created.
    pub out_dir: PathBuf,
    pub algo: Algo,
    /// Random traffic used for training.
    pub traffic: TrafficConfig,
    pub env: EnvConfig,
    pub mobil: MobilParams,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs"),
            algo: Algo::Ppo,
            traffic: TrafficConfig::training(),
            env: EnvConfig::default(),
            mobil: MobilParams::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// The effective configuration, defaults filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        self.traffic.validate().map_err(|e| format!("traffic: {e}"))?;
        self.eval.stochastic.validate().map_err(|e| format!("eval.stochastic: {e}"))?;
        self.env.validate().map_err(|e| format!("env: {e}"))?;
        self.mobil.validate().map_err(|e| format!("mobil: {e}"))?;
        self.train.validate().map_err(|e| format!("train: {e}"))?;
        if !(self.eval.deterministic_horizon > 0.0 && self.eval.deterministic_segment_length > 0.0) {
            return Err("eval: deterministic horizon and segment length must be positive".into());
        }
        Ok(())
    }
}
