//! Experiment configuration document: a flat JSON file with `model`,
//! `reward`, `ppo`, `env`, and `experiment` sections. Unknown keys are
//! rejected so misspelled weight names fail loudly.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crutchgait_core::env::EnvConfig;
use crutchgait_core::harness::ExperimentConfig;
use crutchgait_core::model::ModelConfig;
use crutchgait_core::ppo::PpoConfig;
use crutchgait_core::rewards::RewardConfig;

/// Which environment a run trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    /// The full planar human-exoskeleton-crutch model.
    CrutchGait,
    /// 1-D velocity-tracking mass; cheap end-to-end verification target.
    PointMass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub environment: EnvKind,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    pub agent_weights: Vec<f64>,
    pub eval_horizon: usize,
    pub eval_weight: f64,
    pub init_std: f64,
    pub checkpoint_every: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let d = ExperimentConfig::default();
        ExperimentSection {
            environment: EnvKind::CrutchGait,
            iterations: d.iterations,
            seeds: d.seeds,
            agent_weights: d.agent_weights,
            eval_horizon: d.eval_horizon,
            eval_weight: d.eval_weight,
            init_std: d.init_std,
            checkpoint_every: d.checkpoint_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigDoc {
    pub model: ModelConfig,
    pub reward: RewardConfig,
    pub ppo: PpoConfig,
    pub env: EnvConfig,
    pub experiment: ExperimentSection,
}

impl ConfigDoc {
    pub fn to_experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            model: self.model,
            reward: self.reward,
            ppo: self.ppo,
            env: self.env,
            iterations: self.experiment.iterations,
            seeds: self.experiment.seeds.clone(),
            agent_weights: self.experiment.agent_weights.clone(),
            eval_horizon: self.experiment.eval_horizon,
            eval_weight: self.experiment.eval_weight,
            init_std: self.experiment.init_std,
            checkpoint_every: self.experiment.checkpoint_every,
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    NotFound(String),
    Io(std::io::Error),
    Parse(serde_json::Error),
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::NotFound(p) => write!(f, "config not found: {p}"),
            ConfigError::Io(e) => write!(f, "config read error: {e}"),
            ConfigError::Parse(e) => write!(f, "config parse error: {e}"),
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
        }
    }
}

/// Loaded config plus the raw bytes it was parsed from (kept verbatim for
/// the run manifest).
#[derive(Debug)]
pub struct LoadedConfig {
    pub doc: ConfigDoc,
    pub raw: String,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    if !path.exists() {
        return Err(ConfigError::NotFound(path.display().to_string()));
    }
    let raw = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
    let doc: ConfigDoc = serde_json::from_str(&raw).map_err(ConfigError::Parse)?;
    doc.to_experiment()
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(LoadedConfig { doc, raw })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn empty_document_uses_defaults() {
        let doc: ConfigDoc = serde_json::from_str("{}").unwrap();
        assert_eq!(doc, ConfigDoc::default());
        assert_eq!(doc.experiment.eval_weight, 4e4);
        assert_eq!(doc.ppo.k_epochs, 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = r#"{"reward": {"w_crutch_reation_force": 1.0}}"#;
        assert!(serde_json::from_str::<ConfigDoc>(bad).is_err());
        let bad = r#"{"rewards": {}}"#;
        assert!(serde_json::from_str::<ConfigDoc>(bad).is_err());
    }

    #[test]
    fn roundtrip_through_json_is_identical() {
        let mut doc = ConfigDoc::default();
        doc.reward.w_crutch_reaction_force = 2e4;
        doc.experiment.iterations = 400;
        let text = serde_json::to_string_pretty(&doc).unwrap();
        let back: ConfigDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(doc, back);
    }

    #[test]
    fn missing_file_reports_not_found() {
        let err = load_config(Path::new("/nonexistent/cfg.json")).unwrap_err();
        assert!(err.to_string().contains("config not found"));
    }

    #[test]
    fn invalid_experiment_is_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"experiment": {{"iterations": 0}}}}"#).unwrap();
        let err = load_config(f.path()).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
    }
}
