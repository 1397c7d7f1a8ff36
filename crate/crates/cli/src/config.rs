//! JSON overlay file. Every field is optional; a value given on the command
//! line wins over the file, and the file wins over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;
use slicerchat_server::BackendConfig;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub ingest: IngestFile,
    pub index: IndexFile,
    pub query: QueryFile,
    pub serve: ServeFile,
    pub bench: BenchFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestFile {
    pub root: Option<PathBuf>,
    pub ext: Option<Vec<String>>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexFile {
    pub corpus: Option<PathBuf>,
    pub qa: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub max_tokens: Option<usize>,
    pub overlap: Option<usize>,
    pub dim: Option<usize>,
    pub mode: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryFile {
    pub index: Option<PathBuf>,
    pub source: Option<String>,
    pub k: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeFile {
    pub index: Option<PathBuf>,
    pub addr: Option<String>,
    pub backend: Option<String>,
    pub backend_addr: Option<String>,
    /// Extra named backends offered next to the selected one.
    pub backends: Vec<BackendConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchFile {
    pub cases: Option<PathBuf>,
    pub arms: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub review: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub token_delay_ms: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
