//! Atomic file output: everything is written under a `.partial` name and
//! renamed into place once complete.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::CliError;

pub fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".partial");
    PathBuf::from(name)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut w = AtomicWriter::create(path)?;
    w.write_all(bytes).map_err(|e| CliError::output(path, e))?;
    w.commit()
}

/// Incremental writer; until [`commit`](Self::commit) the data lives at the
/// `.partial` path, so an interrupted run is visibly incomplete.
pub struct AtomicWriter {
    target: PathBuf,
    partial: PathBuf,
    out: BufWriter<File>,
}

impl AtomicWriter {
    pub fn create(target: &Path) -> Result<Self, CliError> {
        let partial = partial_path(target);
        let file = File::create(&partial).map_err(|e| CliError::output(&partial, e))?;
        Ok(Self {
            target: target.to_owned(),
            partial,
            out: BufWriter::new(file),
        })
    }

    pub fn partial(&self) -> &Path {
        &self.partial
    }

    /// Writes and flushes, so the partial file survives a crash mid-run.
    pub fn write_line(&mut self, line: &str) -> Result<(), CliError> {
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|e| CliError::output(&self.partial, e))
    }

    pub fn commit(self) -> Result<(), CliError> {
        let file = self
            .out
            .into_inner()
            .map_err(|e| CliError::output(&self.partial, e.error()))?;
        file.sync_all().map_err(|e| CliError::output(&self.partial, e))?;
        std::fs::rename(&self.partial, &self.target).map_err(|e| CliError::output(&self.target, e))
    }
}

impl Write for AtomicWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.out.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}
