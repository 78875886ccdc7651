use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::error::{CliError, CliResult};

/// Files staged in memory and published together. Nothing appears under the
/// final names unless every file was written; a failure part-way removes the
/// ones already moved into place.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn commit(self) -> CliResult<Vec<PathBuf>> {
        let mut staged = Vec::with_capacity(self.files.len());
        for (path, bytes) in &self.files {
            staged.push((path.clone(), stage(path, bytes)?));
        }
        let mut done: Vec<PathBuf> = Vec::with_capacity(staged.len());
        for (path, tmp) in staged {
            if let Err(e) = tmp.persist(&path) {
                for p in &done {
                    let _ = std::fs::remove_file(p);
                }
                return Err(CliError::io(&path, e.error));
            }
            done.push(path);
        }
        Ok(done)
    }
}

fn stage(path: &Path, bytes: &[u8]) -> CliResult<NamedTempFile> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.flush().map_err(|e| CliError::io(path, e))?;
    Ok(tmp)
}

/// Single-file convenience wrapper around [`OutputSet`].
pub fn write_atomic(path: &Path, bytes: Vec<u8>) -> CliResult<()> {
    let mut set = OutputSet::new();
    set.add(path, bytes);
    set.commit().map(|_| ())
}
