use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{ExperimentError, Result};
use crate::aggregation::MemoryMode;
use crate::gossip::GossipConfig;
use crate::simkernel::{
    build_fault_plan, rescale_epoch, FaultPlan, FaultProfile, FaultProfileSpec, MonitoringMode,
    SimConfig, REFERENCE_RUNTIME,
};
use crate::Epoch;

/// Largest detection threshold of the reference grid; relative thresholds
/// in the feature vector are measured against it.
pub const MAX_REFERENCE_THRESHOLD: Epoch = 800;

/// A threshold as configured (reference units) and as simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub reference: Epoch,
    pub actual: Epoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Generated data; the seed defaults to the experiment seed.
    Synthetic {
        seed: Option<u64>,
    },
    Csv {
        path: String,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic { seed: None }
    }
}

fn default_epoch_ms() -> u32 {
    250
}

fn default_monitoring() -> MonitoringMode {
    MonitoringMode::AllPairs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_nodes: usize,
    pub epochs: Epoch,
    pub bootstrap_epochs: Epoch,
    #[serde(default = "default_epoch_ms")]
    pub epoch_duration_ms: u32,
    pub seed: u64,
    #[serde(default)]
    pub gossip: GossipConfig,
    pub profile: FaultProfile,
    pub fault_scale: f64,
    /// Detection thresholds on the 3200-epoch reference runtime; rescaled
    /// proportionally to `epochs`.
    pub thresholds: Vec<Epoch>,
    #[serde(default = "default_monitoring")]
    pub monitoring: MonitoringMode,
    #[serde(default)]
    pub memory: MemoryMode,
    /// Normalize relative frequencies per scenario instead of over all pairs.
    #[serde(default)]
    pub per_scenario_frequencies: bool,
    #[serde(default)]
    pub data: DataSource,
}

fn config_err(m: String) -> ExperimentError {
    ExperimentError::Config(m)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(config_err(format!(
                "n_nodes: must be at least 2, got {}",
                self.n_nodes
            )));
        }
        if self.epochs == 0 {
            return Err(config_err("epochs: must be positive".into()));
        }
        if self.bootstrap_epochs >= self.epochs {
            return Err(config_err(format!(
                "bootstrap_epochs: {} must be smaller than epochs ({})",
                self.bootstrap_epochs, self.epochs
            )));
        }
        if !(0.0..=1.0).contains(&self.fault_scale) {
            return Err(config_err(format!(
                "fault_scale: {} outside [0, 1]",
                self.fault_scale
            )));
        }
        if self.thresholds.is_empty() {
            return Err(config_err("thresholds: must not be empty".into()));
        }
        if let Some(t) = self.thresholds.iter().find(|&&t| t == 0) {
            return Err(config_err(format!(
                "thresholds: {t} is not a positive epoch count"
            )));
        }
        if let Some(t) = self.thresholds.iter().find(|&&t| t > REFERENCE_RUNTIME) {
            return Err(config_err(format!(
                "thresholds: {t} exceeds the reference runtime of {REFERENCE_RUNTIME} epochs"
            )));
        }
        if let MemoryMode::Bloom { m_bits, k_hashes } = self.memory {
            if m_bits == 0 || k_hashes == 0 {
                return Err(config_err(
                    "memory: m_bits and k_hashes must be positive".into(),
                ));
            }
        }
        self.gossip
            .validate()
            .map_err(|m| config_err(format!("gossip.{m}")))?;
        Ok(())
    }

    pub fn resolved_thresholds(&self) -> Vec<ThresholdSpec> {
        self.thresholds
            .iter()
            .map(|&t| ThresholdSpec {
                reference: t,
                actual: rescale_epoch(t, self.epochs).min(self.epochs),
            })
            .collect()
    }

    /// Distinct simulated thresholds, ascending.
    pub fn actual_thresholds(&self) -> Vec<Epoch> {
        let mut v: Vec<Epoch> = self
            .resolved_thresholds()
            .iter()
            .map(|t| t.actual)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            n_nodes: self.n_nodes,
            epochs: self.epochs,
            bootstrap_epochs: self.bootstrap_epochs,
            epoch_duration_ms: self.epoch_duration_ms,
            seed: self.seed,
            gossip: self.gossip.clone(),
            thresholds: self.actual_thresholds(),
            monitoring: self.monitoring,
        }
    }

    pub fn fault_plan(&self) -> Result<FaultPlan> {
        let spec = FaultProfileSpec {
            profile: self.profile,
            scale: self.fault_scale,
            runtime: self.epochs,
        };
        build_fault_plan(&spec, self.n_nodes, self.seed)
            .map_err(|e| config_err(format!("fault_scale: {e}")))
    }

    pub fn data_seed(&self) -> u64 {
        match self.data {
            DataSource::Synthetic { seed: Some(s) } => s,
            _ => self.seed,
        }
    }
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub n_nodes: usize,
    pub epochs: Epoch,
    pub bootstrap_epochs: Epoch,
    #[serde(default = "default_epoch_ms")]
    pub epoch_duration_ms: u32,
    pub seed: u64,
    #[serde(default)]
    pub gossip: GossipConfig,
    #[serde(default)]
    pub memory: MemoryMode,
    #[serde(default)]
    pub data: DataSource,
    pub fault_scales: Vec<f64>,
    pub profiles: Vec<FaultProfile>,
    pub thresholds: Vec<Epoch>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fault_scales.is_empty() {
            return Err(config_err("fault_scales: must not be empty".into()));
        }
        if self.profiles.is_empty() {
            return Err(config_err("profiles: must not be empty".into()));
        }
        if self.parallelism == 0 {
            return Err(config_err("parallelism: must be at least 1".into()));
        }
        for &s in &self.fault_scales {
            self.setting_config(self.profiles[0], s, 0).validate()?;
        }
        Ok(())
    }

    /// Configuration of one (profile, scale) group with the given seed.
    pub fn setting_config(&self, profile: FaultProfile, scale: f64, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            n_nodes: self.n_nodes,
            epochs: self.epochs,
            bootstrap_epochs: self.bootstrap_epochs,
            epoch_duration_ms: self.epoch_duration_ms,
            seed,
            gossip: self.gossip.clone(),
            profile,
            fault_scale: scale,
            thresholds: self.thresholds.clone(),
            monitoring: MonitoringMode::AllPairs,
            memory: self.memory,
            per_scenario_frequencies: false,
            data: self.data.clone(),
        }
    }

    pub fn setting_count(&self) -> usize {
        self.fault_scales.len() * self.profiles.len() * self.thresholds.len()
    }
}

/// Parse JSON, reporting problems as configuration errors.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| config_err(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> &'static str {
        r#"{"n_nodes": 50, "epochs": 800, "bootstrap_epochs": 100, "seed": 1,
            "profile": "P1", "fault_scale": 0.5, "thresholds": [100, 400]}"#
    }

    #[test]
    fn parses_with_defaults() {
        let c: ExperimentConfig = parse_json(base()).unwrap();
        c.validate().unwrap();
        assert_eq!(c.gossip.view_capacity, 50);
        assert_eq!(c.memory, MemoryMode::Exact);
        assert_eq!(c.actual_thresholds(), vec![25, 100]);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = base().replace("\"seed\"", "\"sede\"");
        let err = parse_json::<ExperimentConfig>(&text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("sede"), "{err}");
    }

    #[test]
    fn invalid_value_is_named() {
        let mut c: ExperimentConfig = parse_json(base()).unwrap();
        c.fault_scale = 1.5;
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("fault_scale"));
        c.fault_scale = 0.5;
        c.gossip.swap = 100;
        assert!(c.validate().unwrap_err().to_string().contains("gossip"));
    }

    #[test]
    fn bloom_memory_parses() {
        let text = base().replace(
            "\"seed\": 1",
            "\"seed\": 1, \"memory\": {\"mode\": \"bloom\", \"m_bits\": 4096, \"k_hashes\": 4}",
        );
        let c: ExperimentConfig = parse_json(&text).unwrap();
        assert_eq!(
            c.memory,
            MemoryMode::Bloom {
                m_bits: 4096,
                k_hashes: 4
            }
        );
    }
}
