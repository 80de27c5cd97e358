use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use dink_core::pipeline::TrainConfig;
use dink_core::{Error, Result};

/// Written before any long computation so an interrupted run still records
/// what it was doing.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: &'static str,
    pub config: TrainConfig,
    pub dataset_fingerprint: String,
    pub seeds: Vec<u64>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// SHA-256 over the dataset files, each prefixed by a role tag and its length so
/// moving bytes between files changes the hash.
pub fn dataset_fingerprint(files: &[(&str, &Path)]) -> Result<String> {
    let mut h = Sha256::new();
    for (role, path) in files {
        let bytes = std::fs::read(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        h.update(role.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
