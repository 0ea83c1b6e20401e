//! Run manifests.
//!
//! Every artifact-producing subcommand writes `<artifact>.run.json` next to
//! its output, recording the fully resolved configuration, input file
//! hashes, seeds, tool version, and timestamp. Re-running the same
//! stub-mode command reproduces the artifact byte-identically.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::util::sha256_hex;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmIdentity {
    pub mode: String,
    pub identity: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub resolved_config: serde_json::Value,
    /// Input path -> SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub tool_version: String,
    pub timestamp: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub llm: Option<LlmIdentity>,
}

impl RunManifest {
    pub fn new(subcommand: &str, resolved_config: serde_json::Value) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            resolved_config,
            inputs: BTreeMap::new(),
            seeds: BTreeMap::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            llm: None,
        }
    }

    pub fn record_input(&mut self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        self.inputs
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn record_seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.to_string(), seed);
    }

    pub fn record_llm(&mut self, mode: &str, identity: String) {
        self.llm = Some(LlmIdentity {
            mode: mode.to_string(),
            identity,
        });
    }

    /// Write `<artifact>.run.json` atomically (temp file + rename).
    pub fn write_alongside(&self, artifact: impl AsRef<Path>) -> std::io::Result<()> {
        let artifact = artifact.as_ref();
        let manifest_path = manifest_path_for(artifact);
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        let tmp = manifest_path.with_extension("tmp-write");
        std::fs::write(&tmp, json)?;
        std::fs::rename(&tmp, &manifest_path)
    }
}

pub fn manifest_path_for(artifact: &Path) -> std::path::PathBuf {
    let mut name = artifact
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".run.json");
    artifact.with_file_name(name)
}
