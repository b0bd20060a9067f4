//! File formats: CSV tables, canonical JSON documents, configuration and run
//! manifests.
//!
//! All writers are deterministic. Floats are written with 17 significant
//! digits (`{:.16e}`), which round-trips every finite `f64` exactly. Files
//! hold SI units only.

mod config;
mod json;
mod manifest;
mod tables;

pub use config::{
    load_config, parse_config, ConfigDoc, DriveSection, FieldSection, LineshapeSection, LockInSection,
    MapSection, MapSource, NoiseSection, ScheduleSection, SpectrumSection, SweepSection,
};
pub use json::{from_json_str, load_json, to_json_string, write_json, Versioned};
pub use manifest::{derive_seed, sha256_hex, store_results, RunManifest, StoredResult};
pub use tables::{
    load_map, load_sweep, load_time_series, parse_sweep, write_map, write_sweep, write_table, write_time_series,
    Cell, SweepRecord, MAP_HEADER, SWEEP_HEADER, TIME_SERIES_HEADER,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

/// Version stamped into every JSON document.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("{}: {message}", path.display())]
    IoFailure { path: PathBuf, message: String },
    #[error("line 1: expected header `{expected}`, found `{found}`")]
    MalformedHeader { expected: String, found: String },
    #[error("line {line}: axis value {value} does not increase")]
    NonMonotoneAxis { line: u64, value: f64 },
    #[error("line {line}, column `{column}`: `{cell}` is not a number")]
    NonNumericCell { line: u64, column: String, cell: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },
    #[error("{path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("unsupported format_version {found} (expected {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("digest mismatch for {file}")]
    DigestMismatch { file: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

impl FormatError {
    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        FormatError::IoFailure {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }
}

/// Canonical text form of a float.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_owned()
    } else if v > 0.0 {
        "inf".to_owned()
    } else {
        "-inf".to_owned()
    }
}
