use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Flag name to value, lists comma-joined.
    pub parameters: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub timestamp: String,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, parameters: BTreeMap<String, String>, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            parameters,
            seed,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// Argument vector reproducing the run, without the program name.
    pub fn argv(&self) -> Vec<String> {
        let mut out = vec![self.command.clone()];
        for (k, v) in &self.parameters {
            match v.as_str() {
                "true" if k == "antithetic" => out.push(format!("--{k}")),
                "false" if k == "antithetic" => {}
                _ => {
                    out.push(format!("--{k}"));
                    out.push(v.clone());
                }
            }
        }
        out
    }
}

/// Collects resolved parameters for the manifest.
#[derive(Default)]
pub struct Params(pub BTreeMap<String, String>);

impl Params {
    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.0.insert(key.to_string(), value.to_string());
        self
    }

    pub fn list<T: ToString>(&mut self, key: &str, values: &[T]) -> &mut Self {
        let joined = values
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",");
        self.set(key, joined)
    }
}
