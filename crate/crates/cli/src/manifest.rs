//! Run manifests: what was run, with which inputs, and digests of every output.

use std::fs;
use std::path::{Path, PathBuf};

use hermite_burgers::solver::SIGN_CONVENTION;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::{CliError, Format, VerifyCheck};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CommandRecord {
    Sample,
    Solve {
        #[serde(skip_serializing_if = "Option::is_none")]
        noise: Option<FileDigest>,
    },
    Verify {
        check: VerifyCheck,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: CommandRecord,
    /// Effective configuration after command-line overrides.
    pub config: ExperimentConfig,
    pub format: Format,
    pub master_seed: u64,
    pub stream_index: u64,
    pub threads: Option<usize>,
    pub started: String,
    pub finished: String,
    pub exit_code: i32,
    /// Outputs relative to the manifest's directory.
    pub outputs: Vec<FileDigest>,
    pub sign_convention: String,
    #[serde(default)]
    pub diagnostics: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: CommandRecord, config: &ExperimentConfig, format: Format, threads: Option<usize>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            config: config.clone(),
            format,
            master_seed: config.run.master_seed,
            stream_index: config.run.stream_index,
            threads,
            started: now(),
            finished: String::new(),
            exit_code: 0,
            outputs: Vec::new(),
            sign_convention: SIGN_CONVENTION.to_string(),
            diagnostics: serde_json::Value::Null,
        }
    }

    /// Records `name` (already written under `dir`) with its digest.
    pub fn record(&mut self, dir: &Path, name: &str) -> Result<(), CliError> {
        let sha256 = digest_file(&dir.join(name))?;
        self.outputs.push(FileDigest { path: name.to_string(), sha256 });
        Ok(())
    }

    pub fn write(&mut self, dir: &Path, exit_code: i32) -> Result<PathBuf, CliError> {
        self.finished = now();
        self.exit_code = exit_code;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    /// Outputs whose current digest differs from the recorded one (missing files included).
    pub fn stale_outputs(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|o| digest_file(&dir.join(&o.path)).map(|d| d != o.sha256).unwrap_or(true))
            .map(|o| o.path.clone())
            .collect()
    }
}

pub fn digest_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_content() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a"), b"abc").unwrap();
        assert_eq!(
            digest_file(&dir.path().join("a")).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn stale_outputs_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig::parse("[model]\nq = 1\nhurst = [0.7, 0.7]\nnu = 1.0\n").unwrap();
        let mut m = RunManifest::new(CommandRecord::Sample, &config, Format::Bin, None);
        fs::write(dir.path().join("x.bin"), b"1").unwrap();
        m.record(dir.path(), "x.bin").unwrap();
        m.write(dir.path(), 0).unwrap();
        let back = RunManifest::read(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back.outputs, m.outputs);
        assert!(back.stale_outputs(dir.path()).is_empty());
        fs::write(dir.path().join("x.bin"), b"2").unwrap();
        assert_eq!(back.stale_outputs(dir.path()), vec!["x.bin".to_string()]);
    }
}
