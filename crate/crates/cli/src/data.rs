//! Dataset argument parsing: `<path>.csv`, `csv:<path>`, or
//! `idx:<images>,<labels>`.

use std::path::Path;

use pmv_core::io::{load_csv_dataset, load_idx};
use pmv_core::{Error, LabeledDataset, Result};

pub fn load_dataset(spec: &str) -> Result<LabeledDataset> {
    if let Some(rest) = spec.strip_prefix("idx:") {
        let (images, labels) = rest.split_once(',').ok_or_else(|| {
            Error::Config(format!("idx data spec needs 'idx:<images>,<labels>', got {spec:?}"))
        })?;
        return load_idx(Path::new(images.trim()), Path::new(labels.trim()));
    }
    if let Some(path) = spec.strip_prefix("csv:") {
        return load_csv_dataset(Path::new(path.trim()));
    }
    if spec.ends_with(".csv") {
        return load_csv_dataset(Path::new(spec));
    }
    Err(Error::Config(format!(
        "cannot interpret data spec {spec:?}: use '<path>.csv', 'csv:<path>' or 'idx:<images>,<labels>'"
    )))
}
