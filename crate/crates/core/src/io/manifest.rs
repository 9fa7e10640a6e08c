//! Run manifests: the resolved configuration and everything needed to
//! repeat a run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>, threads: usize) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            seed,
            threads,
            outputs: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), s + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(dir.join("manifest.json"))?;
        serde_json::from_str(&s).map_err(|e| crate::Error::Format(format!("manifest: {e}")))
    }
}
