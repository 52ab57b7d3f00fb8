use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct Provenance<'a> {
    pub command: &'a str,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub data_root: Option<String>,
    pub versions: Versions,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub egopose: &'static str,
    pub checkpoint_format: u32,
}

impl Versions {
    pub fn current() -> Self {
        Self {
            egopose: env!("CARGO_PKG_VERSION"),
            checkpoint_format: 1,
        }
    }
}

impl Provenance<'_> {
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join("provenance.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Internal(e.to_string()))? + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}
