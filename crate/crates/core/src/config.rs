//! Run configuration: a single JSON document, unknown keys rejected, every
//! omitted field filled with its default. The resolved document is what
//! commands echo next to their outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::SystemConfig;
use crate::elbo::PriorParams;
use crate::error::{Error, Result};
use crate::harness::{Method, ProtocolSpec, Scenario};
use crate::inference::{EstimatorKind, HeadConstants, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
    /// Evaluation trials per (scenario, SNR).
    pub trials: usize,
    pub methods: Vec<Method>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0, 10.0, 20.0, 30.0],
            trials: 50,
            methods: Method::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Names output files and CSV rows.
    pub scenario_id: String,
    /// Dimensions and the working SNR of `gen-data` and `train`.
    pub scenario: SystemConfig,
    /// Estimator trained by `gen-data` and `train`.
    pub kind: EstimatorKind,
    pub seed: u64,
    pub train: TrainConfig,
    pub prior: PriorParams,
    pub heads: HeadConstants,
    pub protocol: ProtocolSpec,
    pub sweep: SweepConfig,
    /// Output directory.
    pub out: String,
    /// Where `sweep` looks for checkpoints; `None` means `out`.
    pub checkpoints: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario_id: "default".into(),
            scenario: SystemConfig::default(),
            kind: EstimatorKind::Jce,
            seed: 1,
            train: TrainConfig::default(),
            prior: PriorParams::default(),
            heads: HeadConstants::default(),
            protocol: ProtocolSpec::default(),
            sweep: SweepConfig::default(),
            out: "out".into(),
            checkpoints: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Every module-level check, reported as configuration errors.
    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        let id = &self.scenario_id;
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.') {
            return Err(Error::Config(format!(
                "scenario_id {id:?} must be non-empty and use only letters, digits, '-', '_' or '.'"
            )));
        }
        self.scenario.validate().map_err(as_config)?;
        self.train.validate().map_err(as_config)?;
        self.prior.validate().map_err(as_config)?;
        self.heads.validate().map_err(as_config)?;
        self.protocol.validate().map_err(as_config)?;
        if let Some(bad) = self.sweep.snr_db.iter().find(|s| !s.is_finite()) {
            return Err(Error::Config(format!("sweep.snr_db contains {bad}")));
        }
        if self.out.is_empty() {
            return Err(Error::Config("out must name a directory".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn scenario_entry(&self) -> Scenario {
        Scenario {
            id: self.scenario_id.clone(),
            cfg: self.scenario.clone(),
            seed: self.seed,
        }
    }

    /// File stem shared by a dataset, checkpoint and curve of one
    /// (scenario, estimator, SNR).
    pub fn artifact_stem(&self, kind: EstimatorKind, snr_db: f64) -> String {
        artifact_stem(&self.scenario_id, kind, snr_db)
    }
}

pub fn artifact_stem(scenario: &str, kind: EstimatorKind, snr_db: f64) -> String {
    format!("{scenario}_{}_{snr_db}dB", kind.name())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_omitted_fields() {
        let c = RunConfig::from_json(r#"{"scenario": {"m": 2}, "seed": 9}"#).unwrap();
        assert_eq!(c.scenario.m, 2);
        assert_eq!(c.scenario.n, 64);
        assert_eq!(c.seed, 9);
        assert_eq!(c.sweep.trials, 50);
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        for text in [
            r#"{"sede": 1}"#,
            r#"{"scenario": {"m": 2, "nn": 4}}"#,
            r#"{"scenario": {"n": 15}}"#,
            r#"{"train": {"batch_size": 0}}"#,
            r#"{"sweep": {"methods": ["MO-EST"]}}"#,
            r#"{"scenario_id": "a,b"}"#,
            r#"{"protocol": {"t_g_ms": 0.01}}"#,
        ] {
            assert!(matches!(RunConfig::from_json(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn stems() {
        assert_eq!(artifact_stem("desk", EstimatorKind::Jcce, 20.0), "desk_JCCE_20dB");
        assert_eq!(artifact_stem("desk", EstimatorKind::Jce, -2.5), "desk_JCE_-2.5dB");
    }
}
