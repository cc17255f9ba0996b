//! IDX container parsing (the MNIST distribution format): big-endian
//! magic and dimension sizes, then raw unsigned bytes.

use std::fs;
use std::path::Path;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::mat::Matrix;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn u32_be(&mut self) -> Result<u32> {
        let end = self.offset + 4;
        let slice = self.bytes.get(self.offset..end).ok_or_else(|| {
            Error::Format(format!(
                "{}: truncated at offset {}",
                self.path.display(),
                self.offset
            ))
        })?;
        let v = u32::from_be_bytes(slice.try_into().expect("4-byte slice"));
        self.offset = end;
        Ok(v)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.offset + n;
        let slice = self.bytes.get(self.offset..end).ok_or_else(|| {
            Error::Format(format!(
                "{}: truncated at offset {} (need {} bytes)",
                self.path.display(),
                self.offset,
                n
            ))
        })?;
        self.offset = end;
        Ok(slice)
    }
}

/// Loads an IDX image/label file pair. Pixel bytes are scaled to
/// [0, 1] (255 → exactly 1.0); each image is flattened row-major to one
/// feature row.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let image_bytes = fs::read(images_path)?;
    let mut r = Reader {
        bytes: &image_bytes,
        offset: 0,
        path: images_path,
    };
    let magic = r.u32_be()?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad images magic {magic:#010x} at offset 0 (expected {IMAGES_MAGIC:#010x})",
            images_path.display()
        )));
    }
    let n = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    let dim = rows * cols;
    let pixels = r.take(n * dim)?;

    let label_bytes = fs::read(labels_path)?;
    let mut r = Reader {
        bytes: &label_bytes,
        offset: 0,
        path: labels_path,
    };
    let magic = r.u32_be()?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad labels magic {magic:#010x} at offset 0 (expected {LABELS_MAGIC:#010x})",
            labels_path.display()
        )));
    }
    let n_labels = r.u32_be()? as usize;
    if n_labels != n {
        return Err(Error::Format(format!(
            "image count {n} != label count {n_labels}"
        )));
    }
    let labels_raw = r.take(n)?;

    let features = Matrix::from_vec(
        n,
        dim,
        pixels.iter().map(|&b| b as f64 / 255.0).collect(),
    )?;
    let labels = labels_raw.iter().map(|&b| b as usize).collect();
    LabeledDataset::new(
        features,
        labels,
        images_path.file_name().and_then(|s| s.to_str()).unwrap_or("idx"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_images(path: &Path, magic: u32, n: u32, r: u32, c: u32, data: &[u8]) {
        let mut f = fs::File::create(path).unwrap();
        f.write_all(&magic.to_be_bytes()).unwrap();
        f.write_all(&n.to_be_bytes()).unwrap();
        f.write_all(&r.to_be_bytes()).unwrap();
        f.write_all(&c.to_be_bytes()).unwrap();
        f.write_all(data).unwrap();
    }

    fn write_labels(path: &Path, magic: u32, labels: &[u8]) {
        let mut f = fs::File::create(path).unwrap();
        f.write_all(&magic.to_be_bytes()).unwrap();
        f.write_all(&(labels.len() as u32).to_be_bytes()).unwrap();
        f.write_all(labels).unwrap();
    }

    #[test]
    fn all_zero_fixture_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        write_images(&img, IMAGES_MAGIC, 2, 28, 28, &vec![0u8; 2 * 784]);
        write_labels(&lab, LABELS_MAGIC, &[3, 7]);
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.input_dim(), 784);
        assert!(ds.features.data().iter().all(|&v| v == 0.0));
        assert_eq!(ds.labels, vec![3, 7]);
    }

    #[test]
    fn byte_255_maps_to_exactly_one() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        write_images(&img, IMAGES_MAGIC, 1, 1, 2, &[255, 51]);
        write_labels(&lab, LABELS_MAGIC, &[0]);
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.features.get(0, 0), 1.0);
        assert_eq!(ds.features.get(0, 1), 0.2);
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        write_images(&img, 0xDEAD_BEEF, 1, 1, 1, &[0]);
        write_labels(&lab, LABELS_MAGIC, &[0]);
        let err = load_idx(&img, &lab).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn truncated_file_names_offset() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        write_images(&img, IMAGES_MAGIC, 4, 2, 2, &[0u8; 3]); // needs 16
        write_labels(&lab, LABELS_MAGIC, &[0, 0, 0, 0]);
        let err = load_idx(&img, &lab).unwrap_err();
        assert!(err.to_string().contains("offset"), "{err}");
    }

    #[test]
    fn count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        write_images(&img, IMAGES_MAGIC, 2, 1, 1, &[0, 0]);
        write_labels(&lab, LABELS_MAGIC, &[1]);
        assert!(load_idx(&img, &lab).is_err());
    }
}
