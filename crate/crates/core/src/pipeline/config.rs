use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conditioning::ConditioningSpec;
use crate::error::{Error, Result};
use crate::model::{DetectorParams, SourceParams};
use crate::stats::Bootstrap;

pub const DEFAULT_PULSES: usize = 300_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSweep {
    #[serde(rename = "powers_mW")]
    pub powers_mw: Vec<f64>,
    /// c in N_m = sinh²(c·√P), mW^(−1/2).
    pub gain_coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(deserialize_with = "deserialize_source")]
    pub source: SourceParams,
    pub detectors: [DetectorParams; 2],
    #[serde(default = "default_pulses")]
    pub n_pulses: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pump_sweep: Option<PumpSweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditioning: Option<Vec<ConditioningSpec>>,
    #[serde(default)]
    pub bootstrap: Bootstrap,
}

fn default_pulses() -> usize {
    DEFAULT_PULSES
}

/// Source as written in a config file: `unmatched_modes_2` defaults to
/// `unmatched_modes_1`, jitter to 0.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceInput {
    n_mean_per_mode: f64,
    matched_modes: u64,
    #[serde(default)]
    unmatched_modes_1: u64,
    #[serde(default)]
    unmatched_modes_2: Option<u64>,
    #[serde(default)]
    gain_jitter_rel_std: f64,
}

fn deserialize_source<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<SourceParams, D::Error> {
    let s = SourceInput::deserialize(d)?;
    Ok(SourceParams {
        n_mean_per_mode: s.n_mean_per_mode,
        matched_modes: s.matched_modes,
        unmatched_modes_1: s.unmatched_modes_1,
        unmatched_modes_2: s.unmatched_modes_2.unwrap_or(s.unmatched_modes_1),
        gain_jitter_rel_std: s.gain_jitter_rel_std,
    })
}

fn prefixed(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { field, reason } => Error::InvalidParameter {
            field: format!("{prefix}{field}"),
            reason,
        },
        other => other,
    }
}

impl ExperimentConfig {
    pub fn new(source: SourceParams, detectors: [DetectorParams; 2]) -> Self {
        ExperimentConfig {
            source,
            detectors,
            n_pulses: DEFAULT_PULSES,
            seed: 0,
            pump_sweep: None,
            conditioning: None,
            bootstrap: Bootstrap::default(),
        }
    }

    /// Checks every nested invariant; the error names the first offending field.
    pub fn validate(&self) -> Result<()> {
        self.source.validate().map_err(|e| prefixed("source.", e))?;
        for (i, d) in self.detectors.iter().enumerate() {
            d.validate(i)?;
        }
        if self.n_pulses == 0 {
            return Err(Error::param("n_pulses", "must be >= 1"));
        }
        if let Some(sweep) = &self.pump_sweep {
            if sweep.powers_mw.is_empty() {
                return Err(Error::param("pump_sweep.powers_mW", "must not be empty"));
            }
            for (i, p) in sweep.powers_mw.iter().enumerate() {
                if !p.is_finite() || *p < 0.0 {
                    return Err(Error::param(
                        format!("pump_sweep.powers_mW[{i}]"),
                        format!("must be finite and >= 0, got {p}"),
                    ));
                }
            }
            if !(sweep.gain_coeff > 0.0) || !sweep.gain_coeff.is_finite() {
                return Err(Error::param(
                    "pump_sweep.gain_coeff",
                    format!("must be > 0, got {}", sweep.gain_coeff),
                ));
            }
        }
        if let Some(specs) = &self.conditioning {
            for (i, s) in specs.iter().enumerate() {
                s.validate().map_err(|e| prefixed(&format!("conditioning[{i}]."), e))?;
            }
        }
        self.bootstrap.validate().map_err(|e| prefixed("bootstrap.", e))?;
        Ok(())
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_json(&text, path)
}

pub fn save_config(path: impl AsRef<Path>, cfg: &ExperimentConfig) -> Result<()> {
    super::write_atomic(path.as_ref(), cfg.to_json().as_bytes())
}
