//! Run manifests: enough resolved state to replay any command bit-exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::files::CliError;

/// Written next to every data output as `<output>.manifest.json`. Replaying
/// `argv` reproduces the data output byte-for-byte; only `timestamp_unix`
/// varies between runs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub argv: Vec<String>,
    pub tool_version: &'static str,
    pub seed: Option<u64>,
    pub input_digests: BTreeMap<String, String>,
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn new(command: &'static str, seed: Option<u64>) -> Self {
        Self {
            command,
            argv: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION"),
            seed,
            input_digests: BTreeMap::new(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn digest_input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.input_digests.insert(path.display().to_string(), hex);
        Ok(())
    }

    /// Serialize next to the data output.
    pub fn write_for(&self, output: &Path) -> Result<(), CliError> {
        let path = output.with_file_name(format!(
            "{}.manifest.json",
            output
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "output".into())
        ));
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::usage(format!("cannot encode manifest: {e}")))?;
        text.push('\n');
        fs::write(&path, text)
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
    }
}
