//! Output plumbing: atomic file writes and the run record embedded in every
//! JSON artifact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::CliError;

/// Echo of the invocation that produced an artifact. Contains no clock or
/// host data so reruns are byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub flags: serde_json::Value,
    pub seed: u64,
    pub version: String,
}

impl RunConfig {
    pub fn new<A: Serialize>(command: &str, flags: &A, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            flags: serde_json::to_value(flags).unwrap_or(serde_json::Value::Null),
            seed,
            version: concat!("ppm ", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }
}

#[derive(Serialize)]
struct WithRun<'a, T: Serialize> {
    run: &'a RunConfig,
    #[serde(flatten)]
    body: &'a T,
}

/// Writes `bytes` to a temporary file beside `path` and renames it into
/// place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| io_error(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_error(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_error(path, e))?;
    tmp.persist(path).map_err(|e| io_error(path, e.error))?;
    Ok(())
}

/// JSON object holding `run` followed by the fields of `body`.
pub fn write_json<T: Serialize>(path: &Path, run: &RunConfig, body: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(&WithRun { run, body })
        .map_err(|e| CliError::Runtime(format!("serializing {}: {e}", path.display())))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Renders CSV through `fill` into memory, then writes it atomically.
pub fn write_csv_with<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Vec<u8>) -> ppm_core::Result<()>,
{
    let mut buf = Vec::new();
    fill(&mut buf).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    write_atomic(path, &buf)
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}
