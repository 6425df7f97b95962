//! Output staging. Artifacts are held in memory until a run succeeds, then
//! written with temp-file-and-rename and listed in `manifest.json`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Format;
use crate::error::CliError;

#[derive(Debug, Default)]
pub struct Artifacts {
    formats: Vec<Format>,
    files: Vec<(String, Vec<u8>)>,
}

#[derive(Debug, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub artifacts: Vec<ManifestEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `bytes` to `path` via a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    file.write_all(bytes).map_err(io_err(&tmp))?;
    file.sync_all().map_err(io_err(&tmp))?;
    drop(file);
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl Artifacts {
    pub fn new(formats: &[Format]) -> Self {
        Self {
            formats: formats.to_vec(),
            files: Vec::new(),
        }
    }

    pub fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }

    /// Stages `bytes` under `name` when `format` was requested.
    pub fn add(&mut self, name: impl Into<String>, format: Format, bytes: Vec<u8>) {
        if self.wants(format) {
            self.files.push((name.into(), bytes));
        }
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        if self.wants(Format::Json) {
            let mut bytes = serde_json::to_vec_pretty(value)
                .map_err(|e| CliError::Plot(format!("cannot serialize {name}: {e}")))?;
            bytes.push(b'\n');
            self.files.push((name.into(), bytes));
        }
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every staged file under `dir`, then the manifest.
    pub fn commit(self, dir: &Path, command: &str) -> Result<Manifest, CliError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut entries = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(io_err(parent))?;
            }
            write_atomic(&path, bytes)?;
            entries.push(ManifestEntry {
                path: name.clone(),
                bytes: bytes.len(),
                sha256: hex::encode(Sha256::digest(bytes)),
            });
        }
        let manifest = Manifest {
            command: command.into(),
            artifacts: entries,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| CliError::Plot(format!("cannot serialize manifest: {e}")))?;
        bytes.push(b'\n');
        write_atomic(&dir.join("manifest.json"), &bytes)?;
        Ok(manifest)
    }
}
