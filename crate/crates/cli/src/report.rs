//! Versioned JSON report shared by all analysis commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::{read_json_file, write_json, InputDigest};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub config_hash: String,
    pub inputs: Vec<InputDigest>,
    pub stages: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(config_hash: String, inputs: Vec<InputDigest>) -> Self {
        Report {
            version: TOOL_VERSION.to_string(),
            config_hash,
            inputs,
            stages: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn insert_stage<T: Serialize>(&mut self, name: &str, stage: &T) {
        let value = serde_json::to_value(stage).expect("stage serializes");
        self.stages.insert(name.to_string(), value);
    }

    /// Typed view of a stage; `Ok(None)` when absent.
    pub fn stage<T: DeserializeOwned>(&self, name: &str) -> std::result::Result<Option<T>, serde_json::Error> {
        self.stages.get(name).map(|v| T::deserialize(v)).transpose()
    }

    pub fn write(&self, output_dir: &Path, command: &str) -> Result<PathBuf> {
        let path = output_dir.join(format!("report_{command}.json"));
        write_json(&path, self)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Report> {
        read_json_file(path)
    }

    /// Stages of `other` are added; on name clashes `other` wins.
    pub fn merge(&mut self, other: Report) {
        self.inputs.extend(other.inputs);
        self.stages.extend(other.stages);
        self.warnings.extend(other.warnings);
    }
}

pub(crate) fn stage_error(path: &Path, name: &str, e: serde_json::Error) -> CliError {
    CliError::input(path, format!("stage '{name}' does not match its schema: {e}"))
}
