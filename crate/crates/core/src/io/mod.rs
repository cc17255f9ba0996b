//! File formats: IDX and CSV ingestion, checkpoint persistence, config
//! files, and the CSV analysis outputs.
//!
//! All writes are atomic (temp file in the target directory, then
//! rename).

mod checkpoint;
mod config;
mod csv;
mod idx;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::RunConfig;
pub use csv::{
    load_csv_dataset, load_trials, save_csv_dataset, write_audit_report, write_embeddings,
    write_roc_reports, write_scores, write_train_log, write_trials,
};
pub use idx::load_idx;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to `path` via a temp file + rename in the same
/// directory.
pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp~");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn format_f64(v: f64) -> String {
    if v.is_finite() {
        // 17 significant decimal digits: parses back bit-exactly.
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub(crate) fn parse_f64(s: &str, context: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Data(format!("{context}: not a number: {s:?}")))
}

pub(crate) fn parse_usize(s: &str, context: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::Data(format!("{context}: not an integer: {s:?}")))
}
