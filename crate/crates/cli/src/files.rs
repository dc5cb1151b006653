//! Output helpers. Every file is written to a sibling temporary and renamed
//! into place, so readers never observe a partial file.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Context, Failure};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).runtime(format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).runtime(format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).runtime(format!("renaming onto {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).runtime(format!("serializing {}", path.display()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(row).runtime(format!("serializing {}", path.display()))?);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

/// Renders into an in-memory buffer first, then writes atomically.
pub fn write_with<F>(path: &Path, render: F) -> Result<(), Failure>
where
    F: FnOnce(&mut Vec<u8>) -> grail_core::Result<()>,
{
    let mut buf = Vec::new();
    render(&mut buf).runtime(format!("rendering {}", path.display()))?;
    write_atomic(path, &buf)
}

pub fn open(path: &Path) -> Result<BufReader<fs::File>, Failure> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::validation(format!("cannot open {}: {e}", path.display())))
}

pub fn read_string(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}
