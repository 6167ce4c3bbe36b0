//! Atomic file output: write a sibling temp file, then rename over the
//! target so readers never observe a partial artifact.

use std::path::{Path, PathBuf};

use procdbn::{Error, Result};

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn to_pretty_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("could not serialize report: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Companion path carrying the configuration echo for non-JSON artifacts.
pub fn config_sidecar(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(".config.json");
    path.with_file_name(name)
}
