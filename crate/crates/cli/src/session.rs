//! File access for one invocation: records every input with its digest and
//! every output path, then writes the run report.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use eadkit::io::config::RunConfig;
use eadkit::io::eadt::{self, EadtEncode, TensorFile};
use eadkit::io::to_json_bytes;
use eadkit::{DetectionSet, Error};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::{CliResult, Context, ExitKind, Failure};

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunReport<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub inputs: &'a [InputDigest],
    pub config: &'a RunConfig,
    pub outputs: &'a [PathBuf],
    pub summary: serde_json::Value,
    pub wall_time_ms: u64,
}

pub struct Session {
    pub config: RunConfig,
    pub seed: u64,
    started: Instant,
    inputs: Vec<InputDigest>,
    outputs: Vec<PathBuf>,
    pending: Vec<(PathBuf, Vec<u8>)>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Session {
    pub fn new(config: RunConfig, seed: u64) -> Self {
        Self {
            config,
            seed,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            pending: Vec::new(),
        }
    }

    pub fn read_bytes(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| Failure::from(Error::io(path, e)))?;
        if !self.inputs.iter().any(|d| d.path == path) {
            self.inputs.push(InputDigest {
                path: path.to_path_buf(),
                sha256: sha256_hex(&bytes),
            });
        }
        Ok(bytes)
    }

    pub fn read_tensor(&mut self, path: &Path) -> CliResult<TensorFile> {
        let bytes = self.read_bytes(path)?;
        eadt::decode(&bytes).ctx(path.display())
    }

    pub fn read_detections(&mut self, path: &Path) -> CliResult<Vec<DetectionSet>> {
        let bytes = self.read_bytes(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|e| Failure::new(ExitKind::Io, anyhow::anyhow!("{}: {e}", path.display())))?;
        eadkit::io::parse_detections(&text).ctx(path.display())
    }

    /// Queues a file; nothing touches the disk until [`Session::finish`].
    pub fn emit(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.outputs.push(path.clone());
        self.pending.push((path, bytes));
    }

    pub fn emit_json<T: Serialize + ?Sized>(&mut self, path: PathBuf, value: &T) {
        self.emit(path, to_json_bytes(value));
    }

    pub fn emit_tensor<T: EadtEncode>(&mut self, path: PathBuf, t: &T) {
        self.emit(path, eadt::encode(t));
    }

    /// Writes queued outputs, then the run report.
    pub fn finish(
        self,
        command: &str,
        report_path: &Path,
        summary: serde_json::Value,
    ) -> CliResult<()> {
        for (path, bytes) in &self.pending {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Failure::from(Error::io(dir, e)))?;
            }
            fs::write(path, bytes).map_err(|e| Failure::from(Error::io(path, e)))?;
        }
        let report = RunReport {
            tool: "eadkit",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: self.seed,
            inputs: &self.inputs,
            config: &self.config,
            outputs: &self.outputs,
            summary,
            wall_time_ms: self.started.elapsed().as_millis() as u64,
        };
        if let Some(dir) = report_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Failure::from(Error::io(dir, e)))?;
        }
        fs::write(report_path, to_json_bytes(&report))
            .map_err(|e| Failure::from(Error::io(report_path, e)))
    }
}

/// `<id>.eadt` files of a directory, sorted by id.
pub fn list_tensors(dir: &Path) -> CliResult<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::from(Error::io(dir, e)))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Failure::from(Error::io(dir, e)))?.path();
        if path.extension().is_some_and(|e| e == "eadt") && path.is_file() {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}
