//! Config file and its defaults. Flags override file values; the file
//! overrides the built-in defaults.

use serde::{Deserialize, Serialize};
use siloflow_core::runtime::LoopConfig;
use siloflow_core::sim::PlantModel;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub training: Training,
    #[serde(default, rename = "loop")]
    pub loop_config: Loop,
    #[serde(default)]
    pub sim: Sim,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub store: Option<String>,
    pub routes: Option<String>,
    pub process: Option<String>,
    pub models: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Training {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub huber_delta: Option<f64>,
    pub train_fraction: Option<f64>,
    pub rules: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Loop {
    pub gas_budget_factor: Option<f64>,
    pub max_retries: Option<u32>,
    pub retry_temperature_bias: Option<f64>,
    pub proposal_temp_sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sim {
    pub k_dry: Option<f64>,
    pub t_ambient: Option<f64>,
    pub c_gas: Option<f64>,
    pub alpha: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub expert_temp_sigma: Option<f64>,
}

impl Config {
    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let config: Config =
            toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(f) = self.training.train_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(format!("training.train_fraction {f} outside (0, 1)"));
            }
        }
        for (name, v) in [
            ("training.epochs", self.training.epochs.map(|e| e as f64)),
            ("training.learning_rate", self.training.learning_rate),
            ("training.huber_delta", self.training.huber_delta),
            ("loop.gas_budget_factor", self.loop_config.gas_budget_factor),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(format!("{name} must be positive, got {v}"));
                }
            }
        }
        Ok(())
    }

    pub fn plant(&self) -> PlantModel {
        let d = PlantModel::default();
        PlantModel {
            k_dry: self.sim.k_dry.unwrap_or(d.k_dry),
            t_ambient: self.sim.t_ambient.unwrap_or(d.t_ambient),
            c_gas: self.sim.c_gas.unwrap_or(d.c_gas),
            alpha: self.sim.alpha.unwrap_or(d.alpha),
            noise_sigma: self.sim.noise_sigma.unwrap_or(d.noise_sigma),
            expert_temp_sigma: self.sim.expert_temp_sigma.unwrap_or(d.expert_temp_sigma),
        }
    }

    pub fn loop_config(&self) -> LoopConfig {
        let d = LoopConfig::default();
        LoopConfig {
            gas_budget_factor: self.loop_config.gas_budget_factor.unwrap_or(d.gas_budget_factor),
            max_retries: self.loop_config.max_retries.unwrap_or(d.max_retries),
            retry_temperature_bias: self
                .loop_config
                .retry_temperature_bias
                .unwrap_or(d.retry_temperature_bias),
            proposal_temp_sigma: self
                .loop_config
                .proposal_temp_sigma
                .unwrap_or(d.proposal_temp_sigma),
        }
    }
}
