//! Output directory bookkeeping and the provenance manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub paper_mode: bool,
    pub config_source: Option<String>,
    /// Digest of the resolved configuration, as written to `config.json`.
    pub config_sha256: String,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects files written by one command. Every file goes through here so
/// that the manifest lists it with its digest.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<OutputFile>,
    config_sha256: String,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            config_sha256: String::new(),
        })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.retain(|f| f.file != name);
        self.files.push(OutputFile {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf).with_context(|| format!("formatting {name}"))?;
        self.write_bytes(name, &buf)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.write_bytes(name, &buf)
    }

    /// Write the resolved configuration and remember its digest.
    pub fn write_config<T: Serialize>(&mut self, value: &T) -> Result<()> {
        self.write_json("config.json", value)?;
        self.config_sha256 = self
            .files
            .last()
            .map(|f| f.sha256.clone())
            .unwrap_or_default();
        Ok(())
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<RunManifest> {
        manifest.config_sha256 = self.config_sha256;
        manifest.outputs = self.files;
        manifest.finished = now();
        let path = self.dir.join(MANIFEST_FILE);
        let mut f = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        f.write_all(b"\n")?;
        Ok(manifest)
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
