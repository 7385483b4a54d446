//! Run manifests: what a command was asked to do and what it produced.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path) -> CliResult<Self> {
        let io = |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = BufReader::new(File::open(path).map_err(io)?);
        let mut hasher = Sha256::new();
        let mut buf = [0u8; 64 * 1024];
        let mut bytes = 0u64;
        loop {
            let n = reader.read(&mut buf).map_err(io)?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
            bytes += n as u64;
        }
        Ok(Self {
            path: path.to_path_buf(),
            bytes,
            sha256: hex::encode(hasher.finalize()),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command: &'static str,
    /// Every flag after defaults are applied, plus derived settings.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub duration_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
}

/// Collects the pieces of a manifest while a command runs.
pub struct Recorder {
    command: &'static str,
    started: Instant,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    summary: Option<serde_json::Value>,
}

impl Recorder {
    pub fn start<C: Serialize>(command: &'static str, config: &C, seed: Option<u64>) -> CliResult<Self> {
        Ok(Self {
            command,
            started: Instant::now(),
            config: serde_json::to_value(config).map_err(catlgp::Error::from)?,
            seed,
            inputs: Vec::new(),
            summary: None,
        })
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn set_config(&mut self, key: &str, value: impl Serialize) -> CliResult<()> {
        let v = serde_json::to_value(value).map_err(catlgp::Error::from)?;
        if let serde_json::Value::Object(map) = &mut self.config {
            map.insert(key.to_string(), v);
        }
        Ok(())
    }

    pub fn summary(&mut self, value: serde_json::Value) {
        self.summary = Some(value);
    }

    /// Hashes the inputs and the finished outputs and writes the manifest
    /// atomically to `path`.
    pub fn finish(self, outputs: &[&Path], path: &Path) -> CliResult<()> {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config: self.config,
            seed: self.seed,
            inputs: self.inputs.iter().map(|p| Artifact::of(p)).collect::<CliResult<_>>()?,
            outputs: outputs.iter().map(|p| Artifact::of(p)).collect::<CliResult<_>>()?,
            duration_secs: self.started.elapsed().as_secs_f64(),
            summary: self.summary,
        };
        catlgp::data_io::write_atomic(path, |w| {
            serde_json::to_writer_pretty(&mut *w, &manifest)?;
            writeln!(w)?;
            Ok(())
        })?;
        Ok(())
    }
}

/// `<file>.manifest.json` next to a single-file output.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
