//! `manifest.json`: content hash of every artifact plus the hashes of the
//! artifacts it was built from.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rvemor::pod::hex;

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Entry {
    pub sha256: String,
    pub stage: String,
    /// Upstream artifact (relative path) → its hash when this one was written.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, Entry>,
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(format!("hashing {}", path.display()), e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn load(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(path.display(), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Mismatch(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(path.display(), e))
    }

    /// Hashes `rel` and records it with the current hashes of `inputs`.
    pub fn record(
        &mut self,
        dir: &Path,
        rel: &str,
        stage: &str,
        inputs: &[String],
        attributes: &[(&str, String)],
    ) -> CliResult<()> {
        let mut upstream = BTreeMap::new();
        for input in inputs {
            upstream.insert(input.clone(), self.hash_of(dir, input)?);
        }
        let entry = Entry {
            sha256: file_sha256(&dir.join(rel))?,
            stage: stage.to_string(),
            inputs: upstream,
            attributes: attributes.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        };
        self.artifacts.insert(rel.to_string(), entry);
        Ok(())
    }

    fn hash_of(&self, dir: &Path, rel: &str) -> CliResult<String> {
        match self.artifacts.get(rel) {
            Some(e) => Ok(e.sha256.clone()),
            None => file_sha256(&dir.join(rel)),
        }
    }

    /// Fails when a recorded artifact was modified after it was recorded.
    pub fn verify(&self, dir: &Path, rel: &str) -> CliResult<()> {
        if let Some(e) = self.artifacts.get(rel) {
            let now = file_sha256(&dir.join(rel))?;
            if now != e.sha256 {
                return Err(CliError::Mismatch(format!(
                    "{rel} changed since the `{}` stage wrote it: manifest {} vs file {now}",
                    e.stage, e.sha256
                )));
            }
        }
        Ok(())
    }

    pub fn attribute(&self, rel: &str, key: &str) -> Option<&str> {
        self.artifacts.get(rel)?.attributes.get(key).map(String::as_str)
    }
}

/// Parses a 64-character lowercase hex digest.
pub fn parse_digest(text: &str) -> CliResult<[u8; 32]> {
    let bad = || CliError::Mismatch(format!("malformed digest {text:?}"));
    if text.len() != 64 {
        return Err(bad());
    }
    let mut out = [0u8; 32];
    for (k, byte) in out.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&text[2 * k..2 * k + 2], 16).map_err(|_| bad())?;
    }
    Ok(out)
}
