//! Result bundles: every run writes into a temporary directory that is renamed
//! to `<name>-<digest>` once all files and the manifest are in place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// A file produced in memory, written when the bundle is committed.
#[derive(Debug, Clone, PartialEq)]
pub struct OutFile {
    pub path: String,
    pub bytes: Vec<u8>,
}

impl OutFile {
    pub fn new(path: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self { path: path.into(), bytes }
    }

    pub fn nested(self, dir: &str) -> Self {
        Self { path: format!("{dir}/{}", self.path), bytes: self.bytes }
    }
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Everything but `created_unix` and `runtime_seconds` is a function of the
/// configuration and the inputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_digest: String,
    pub config: ExperimentConfig,
    pub versions: Versions,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<FileEntry>,
    pub files: Vec<FileEntry>,
    pub created_unix: u64,
    pub runtime_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub ihte_cli: &'static str,
    pub ihte_core: &'static str,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub struct Bundle {
    command: String,
    config: ExperimentConfig,
    digest: String,
    target: PathBuf,
    staging: PathBuf,
    started: Instant,
    input: Option<FileEntry>,
}

impl Bundle {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        let digest = config.digest(command);
        let label = format!("{}-{}-{}", config.name, command, &digest[..12]);
        let root = &config.output.dir;
        Self {
            command: command.to_string(),
            config: config.clone(),
            target: root.join(&label),
            staging: root.join(format!(".{label}.tmp-{}", std::process::id())),
            digest,
            started: Instant::now(),
            input: None,
        }
    }

    pub fn target(&self) -> &Path {
        &self.target
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.input = Some(FileEntry { path: path.display().to_string(), sha256: sha256_hex(&bytes), bytes: bytes.len() });
        Ok(())
    }

    /// Writes all files and the manifest, then moves the bundle into place,
    /// replacing an earlier bundle of the same configuration. Nothing is left
    /// behind on failure.
    pub fn commit(self, files: &[OutFile]) -> Result<PathBuf, CliError> {
        let result = self.write_staging(files);
        if result.is_err() {
            let _ = fs::remove_dir_all(&self.staging);
        }
        result?;
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| CliError::io(&self.target, e))?;
        }
        fs::rename(&self.staging, &self.target).map_err(|e| {
            let _ = fs::remove_dir_all(&self.staging);
            CliError::io(&self.target, e)
        })?;
        Ok(self.target)
    }

    fn write_staging(&self, files: &[OutFile]) -> Result<(), CliError> {
        fs::create_dir_all(&self.staging).map_err(|e| CliError::io(&self.staging, e))?;
        let mut entries = Vec::with_capacity(files.len());
        for f in files {
            let path = self.staging.join(&f.path);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            fs::write(&path, &f.bytes).map_err(|e| CliError::io(&path, e))?;
            entries.push(FileEntry { path: f.path.clone(), sha256: sha256_hex(&f.bytes), bytes: f.bytes.len() });
        }
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            command: self.command.clone(),
            config_digest: self.digest.clone(),
            config: self.config.clone(),
            versions: Versions { ihte_cli: env!("CARGO_PKG_VERSION"), ihte_core: ihte::VERSION },
            input: self.input.as_ref().map(|i| FileEntry { path: i.path.clone(), sha256: i.sha256.clone(), bytes: i.bytes }),
            files: entries,
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            runtime_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = self.staging.join("manifest.json");
        let mut file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::to_writer_pretty(&mut file, &manifest)
            .map_err(std::io::Error::from)
            .and_then(|_| file.write_all(b"\n"))
            .map_err(|e| CliError::io(&path, e))
    }
}
