//! Persistence: the RFQ dataset CSV, JSON model files, the TOML config and
//! the CSV/JSON tables emitted by the command line.
//!
//! Every file is written atomically: contents go to a temporary file in the
//! destination directory which is then renamed over the target.

mod config;
mod dataset;
mod model_file;
pub mod tables;

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub use config::{load_config, ConfigFile};
pub use dataset::{parse_dataset, read_dataset, render_dataset, write_dataset, DATASET_HEADER};
pub use model_file::{
    fingerprint_records, load_ensemble, load_fill_model, load_model_file, load_next_mid,
    save_model_file, EnsembleManifest, ManifestMember, ModelFile, ModelKind, ModelPayload,
    SCHEMA_VERSION,
};

/// Writes `bytes` to `path` via a temporary file and rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
