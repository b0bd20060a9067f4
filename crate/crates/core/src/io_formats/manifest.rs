use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::json::{from_json_str, to_json_string, write_json, Versioned};
use super::tables::write_map;
use super::{FormatError, FORMAT_VERSION};
use crate::analysis::{LorentzFit, SensitivityMap, StepReport};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-item seed derived from a base seed, independent of evaluation order.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Record of one run: inputs, tool version and digests of every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    /// Fully defaulted configuration the run used.
    pub config: serde_json::Value,
    /// Output file name to SHA-256 digest (hex).
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_s: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        RunManifest {
            format_version: FORMAT_VERSION,
            tool: "odmr".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config,
            outputs: BTreeMap::new(),
            wall_clock_s: 0.0,
            started: Some(Instant::now()),
        }
    }

    /// Hashes a finished output file and records it under its file name.
    pub fn record_output(&mut self, path: &Path) -> Result<(), FormatError> {
        let bytes = fs::read(path).map_err(|e| FormatError::io(path, e))?;
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| FormatError::InvalidRecord(format!("bad output path {}", path.display())))?;
        self.outputs.insert(name.to_owned(), sha256_hex(&bytes));
        Ok(())
    }

    /// Stamps the wall-clock duration and writes the manifest. An existing
    /// file at `path` is never overwritten.
    pub fn write(&mut self, path: &Path) -> Result<(), FormatError> {
        if let Some(t0) = self.started {
            self.wall_clock_s = t0.elapsed().as_secs_f64();
        }
        let text = to_json_string(self)?;
        let mut f = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(|e| FormatError::io(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| FormatError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        let m: RunManifest = from_json_str(&text)?;
        if m.format_version != FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion {
                found: m.format_version,
            });
        }
        Ok(m)
    }

    /// Re-hashes every recorded output found in `dir`.
    pub fn verify(&self, dir: &Path) -> Result<(), FormatError> {
        for (name, digest) in &self.outputs {
            let path = dir.join(name);
            let bytes = fs::read(&path).map_err(|e| FormatError::io(&path, e))?;
            if sha256_hex(&bytes) != *digest {
                return Err(FormatError::DigestMismatch { file: name.clone() });
            }
        }
        Ok(())
    }
}

/// A result that [`store_results`] knows how to serialize.
#[derive(Debug, Clone, Copy)]
pub enum StoredResult<'a> {
    Fit(&'a LorentzFit),
    Map(&'a SensitivityMap),
    Steps(&'a StepReport),
}

/// Writes a result (CSV for maps, JSON otherwise) and a manifest next to it
/// named `<stem>.manifest.json`.
pub fn store_results(result: StoredResult<'_>, path: &Path) -> Result<RunManifest, FormatError> {
    let mut manifest = RunManifest::new("store_results", None, serde_json::Value::Null);
    match result {
        StoredResult::Fit(fit) => write_json(path, &Versioned::new(fit))?,
        StoredResult::Map(map) => write_map(path, map)?,
        StoredResult::Steps(report) => write_json(path, &Versioned::new(report))?,
    }
    manifest.record_output(path)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    let manifest_path = path.with_file_name(format!("{stem}.manifest.json"));
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(|e| FormatError::io(&manifest_path, e))?;
    }
    manifest.write(&manifest_path)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn derived_seeds_differ_and_repeat() {
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        assert_ne!(derive_seed(7, 3), derive_seed(7, 4));
        assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
    }
}
