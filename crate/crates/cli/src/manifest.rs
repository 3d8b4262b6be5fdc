//! Run manifests: what a command read, what it resolved to, what it wrote.
//!
//! Every command writes one manifest listing exactly its own artifacts, so a
//! run directory is self-describing. Timings live only here; the artifacts
//! themselves stay byte-identical across reruns with equal inputs.

use dndt_core::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct DatasetStamp {
    /// `builtin:<name>` or the CSV path as given.
    pub source: String,
    /// SHA-256 of the raw CSV bytes.
    pub sha256: String,
    pub instances: usize,
    pub features: usize,
    pub classes: usize,
    pub dropped_rows: usize,
    pub label_column: String,
    pub encoded_columns: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub dataset: Option<DatasetStamp>,
    pub seed: Option<u64>,
    /// Fully resolved configuration after flags and defaults.
    pub config: serde_json::Value,
    /// File names relative to the output directory, this manifest excluded.
    pub artifacts: Vec<String>,
    pub timings_ms: BTreeMap<String, u128>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            dataset: None,
            seed: None,
            config: serde_json::Value::Null,
            artifacts: Vec::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(out_dir.join("manifest.json"), text)?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{:02x}", byte));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
