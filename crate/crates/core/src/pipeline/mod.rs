//! Configuration, dataset persistence and reports.

mod config;
mod persist;
mod report;

use std::io::Write;
use std::path::Path;

pub use config::{load_config, save_config, ExperimentConfig, PumpSweep, DEFAULT_PULSES};
pub use persist::{load_dataset, read_dataset, save_dataset, write_dataset, FORMAT_TAG};
pub use report::{Provenance, Report, ReportEntry};

use crate::error::{Error, Result};

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
