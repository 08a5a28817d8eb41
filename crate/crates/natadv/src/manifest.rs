//! Run manifests: what a command read, wrote and was told, so the run can be
//! repeated and its outputs checked.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::checkpoint::file_hash;
use crate::formats::{read_to_string, write_atomic};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full argument vector, program name excluded.
    pub argv: Vec<String>,
    pub config: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub version: String,
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(command: &str, argv: &[String]) -> Self {
        RunManifest {
            command: command.to_string(),
            argv: argv.to_vec(),
            config: BTreeMap::new(),
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    pub fn input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.inputs.push(entry(path.as_ref())?);
        Ok(())
    }

    pub fn output(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.outputs.push(entry(path.as_ref())?);
        Ok(())
    }

    /// Stamps the finish time and writes the manifest atomically.
    pub fn finish(mut self, path: impl AsRef<Path>) -> Result<RunManifest> {
        self.finished_unix_ms = now_ms();
        let json = serde_json::to_string_pretty(&self).expect("manifest serializes");
        write_atomic(path, format!("{json}\n").as_bytes())?;
        Ok(self)
    }
}

fn entry(path: &Path) -> Result<FileEntry> {
    let sha256 = if path.is_dir() { String::new() } else { file_hash(path)? };
    Ok(FileEntry {
        path: path.to_path_buf(),
        sha256,
    })
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<RunManifest> {
    let path = path.as_ref();
    serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::format(path, e.line(), e.to_string()))
}

/// `<file>.manifest.json` beside an output file.
pub fn beside(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}
