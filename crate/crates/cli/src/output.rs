//! Deferred output files and the run manifest.
//!
//! Commands compute everything first and hand back a list of artifacts, so a
//! failed computation leaves the output directory untouched. Artifacts are
//! written one after another; the manifest goes last.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Format, RunConfig};

type Writer = Box<dyn FnOnce(&Path) -> isrs_core::Result<()> + Send>;

pub struct Artifact {
    /// Path relative to the output directory.
    pub name: String,
    pub format: Format,
    write: Writer,
}

impl Artifact {
    pub fn csv(name: impl Into<String>, write: impl FnOnce(&Path) -> isrs_core::Result<()> + Send + 'static) -> Self {
        Self { name: name.into(), format: Format::Csv, write: Box::new(write) }
    }

    pub fn json<T: Serialize + Send + 'static>(name: impl Into<String>, value: T) -> Self {
        Self {
            name: name.into(),
            format: Format::Json,
            write: Box::new(move |p| isrs_core::io::write_json(p, &value)),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub config_path: Option<PathBuf>,
    /// Digest of the config file as read, if one was given.
    pub config_file_sha256: Option<String>,
    /// Digest of the effective configuration serialized as TOML.
    pub config_sha256: String,
    pub effective_config: RunConfig,
    pub exit_code: i32,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> std::io::Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Writes the selected artifacts in order and returns their digests.
pub fn write_artifacts(dir: &Path, artifacts: Vec<Artifact>, cfg: &RunConfig) -> isrs_core::Result<Vec<FileDigest>> {
    std::fs::create_dir_all(dir)?;
    let mut digests = Vec::new();
    for a in artifacts {
        if !cfg.outputs.formats.contains(&a.format) {
            continue;
        }
        let path = dir.join(&a.name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        (a.write)(&path)?;
        digests.push(FileDigest { path: a.name, sha256: file_sha256(&path)? });
    }
    Ok(digests)
}
