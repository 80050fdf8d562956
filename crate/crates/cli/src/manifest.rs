//! Run manifests: every command that writes outputs records exactly one
//! manifest beside them, carrying enough to rerun the command byte-identically.

use std::path::{Path, PathBuf};

use cotlab_core::{Error, Result};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub parameters: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    pub tool_version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new<P: Serialize>(
        command: &str,
        parameters: &P,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
        seeds: Vec<u64>,
    ) -> Result<RunManifest> {
        Ok(RunManifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            parameters: serde_json::to_value(parameters)?,
            inputs,
            outputs,
            seeds,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        })
    }

    /// Write beside the primary output: `out.jsonl` gets `out.manifest.json`;
    /// a directory output gets `<dir>/manifest.json`.
    pub fn write_beside(&self, primary_output: &Path) -> Result<()> {
        let path = if primary_output.is_dir() {
            primary_output.join("manifest.json")
        } else {
            primary_output.with_extension("manifest.json")
        };
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json).map_err(|source| Error::Io { path, source })
    }
}
