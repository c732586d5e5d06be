//! Run manifests: a small JSON record written next to every command's
//! outputs so a result can always be traced back to the exact invocation
//! and configuration that produced it.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::spectrum_io::{atomic_write, IoError};

/// What produced the artifacts in an output directory.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    /// The full command line, argv[0] included.
    pub command: Vec<String>,
    /// SHA-256 of the resolved configuration JSON (after file loading and
    /// command-line overrides), hex-encoded.
    pub config_sha256: String,
    /// Crate version that produced the run.
    pub version: String,
    /// RFC 3339 UTC timestamp. The only field that differs between
    /// identical reruns.
    pub timestamp: String,
    /// Artifact file names written by the run, in creation order.
    pub outputs: Vec<String>,
}

/// Hex SHA-256 of arbitrary text.
pub fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write as _;
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// Short (12 hex digit) content hash, used to tag provenance strings.
pub fn short_hash(text: &str) -> String {
    sha256_hex(text)[..12].to_string()
}

impl RunManifest {
    pub fn new(command: Vec<String>, resolved_config_json: &str, outputs: Vec<String>) -> Self {
        RunManifest {
            command,
            config_sha256: sha256_hex(resolved_config_json),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            outputs,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Write `manifest.json` into `out_dir`; returns the path written.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, IoError> {
        let path = out_dir.join("manifest.json");
        atomic_write(&path, self.to_json().as_bytes())?;
        Ok(path)
    }
}
