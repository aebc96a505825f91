use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{EfficiencyEstimate, FitResult};
use crate::conditioning::ConditionalResult;
use crate::error::{Error, Result};
use crate::stats::Estimate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReportEntry {
    Estimate(Estimate),
    Fit(FitResult),
    Efficiency(EfficiencyEstimate),
    Conditional(ConditionalResult),
    /// A grid point that could not be evaluated.
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch. Excluded from `determinism_hash`.
    pub created_unix: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    /// SHA-256 over the command inputs (config JSON or dataset files).
    pub inputs_digest: String,
    pub results: BTreeMap<String, ReportEntry>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub provenance: Provenance,
    /// SHA-256 of the report with the timestamp and this field cleared.
    #[serde(default)]
    pub determinism_hash: String,
}

impl Report {
    pub fn new(command: &str, inputs_digest: String, seed: Option<u64>) -> Self {
        Report {
            command: command.to_string(),
            inputs_digest,
            results: BTreeMap::new(),
            warnings: Vec::new(),
            provenance: Provenance {
                tool: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                created_unix: None,
            },
            determinism_hash: String::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, entry: ReportEntry) {
        self.results.insert(name.into(), entry);
    }

    pub fn estimate(&mut self, name: impl Into<String>, e: Estimate) {
        self.insert(name, ReportEntry::Estimate(e));
    }

    pub fn get_estimate(&self, name: &str) -> Option<&Estimate> {
        match self.results.get(name)? {
            ReportEntry::Estimate(e) => Some(e),
            _ => None,
        }
    }

    pub fn compute_determinism_hash(&self) -> String {
        let mut stripped = self.clone();
        stripped.provenance.created_unix = None;
        stripped.determinism_hash.clear();
        let json = serde_json::to_string(&stripped).expect("report serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Stamps the creation time and the determinism hash.
    pub fn finalize(&mut self, created_unix: Option<u64>) {
        self.provenance.created_unix = created_unix;
        self.determinism_hash = self.compute_determinism_hash();
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat `name,field,value,std_error,n_samples` table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,field,value,std_error,n_samples\n");
        let mut row = |name: &str, field: &str, e: &Estimate| {
            out.push_str(&format!(
                "{name},{field},{:e},{:e},{}\n",
                e.value, e.std_error, e.n_samples
            ));
        };
        for (name, entry) in &self.results {
            match entry {
                ReportEntry::Estimate(e) => row(name, "value", e),
                ReportEntry::Fit(f) => {
                    row(name, "alpha", &f.alpha);
                    row(name, "beta", &f.beta);
                    row(
                        name,
                        "chi2_per_dof",
                        &Estimate::new(f.chi2_per_dof, 0.0, f.n_points as u64),
                    );
                }
                ReportEntry::Efficiency(e) => row(name, "eta1", &e.eta1),
                ReportEntry::Conditional(c) => {
                    row(name, "fano_target", &c.fano_target);
                    row(name, "mean_target", &c.mean_target);
                    row(name, "success_rate", &Estimate::new(c.success_rate, 0.0, c.n_total));
                }
                ReportEntry::Failed { .. } => {}
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        super::write_atomic(path.as_ref(), self.to_json().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Report> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}
