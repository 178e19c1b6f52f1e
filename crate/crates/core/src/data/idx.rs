//! IDX binary ingestion and export.
//!
//! Exactly the published layout: big-endian u32 magic and dimension sizes,
//! unsigned-byte payload. Images use magic `0x00000803` (three dimensions:
//! count, rows, cols); labels use `0x00000801` (one dimension: count).
//! Pixels are scaled by 1/255 into `[0, 1]` and images flattened row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::data::dataset::LabeledDataset;
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

struct Cursor<R> {
    inner: R,
    offset: u64,
    path: String,
}

impl<R: Read> Cursor<R> {
    fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(Error::io(
                self.path.clone(),
                std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    format!("truncated at byte {}", self.offset),
                ),
            )),
            Err(e) => Err(Error::io(self.path.clone(), e)),
        }
    }

    fn read_u32_be(&mut self) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.read_exact(&mut buf)?;
        Ok(u32::from_be_bytes(buf))
    }
}

fn open(path: &Path) -> Result<Cursor<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(Cursor {
        inner: BufReader::new(file),
        offset: 0,
        path: path.display().to_string(),
    })
}

/// Loads an images/labels IDX pair as a `[0,1]`-normalized dataset.
///
/// The class count is inferred as `max(label) + 1`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let mut images = open(images_path)?;
    let magic = images.read_u32_be()?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format {
            path: images.path.clone(),
            offset: 0,
            reason: format!("bad magic {magic:#010x}, expected {IMAGE_MAGIC:#010x} (images)"),
        });
    }
    let count = images.read_u32_be()? as usize;
    let rows = images.read_u32_be()? as usize;
    let cols = images.read_u32_be()? as usize;
    let dim = rows * cols;
    if dim == 0 {
        return Err(Error::Format {
            path: images.path.clone(),
            offset: 8,
            reason: format!("degenerate image shape {rows}x{cols}"),
        });
    }
    let mut pixels = vec![0u8; count * dim];
    images.read_exact(&mut pixels)?;

    let mut labels_file = open(labels_path)?;
    let magic = labels_file.read_u32_be()?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format {
            path: labels_file.path.clone(),
            offset: 0,
            reason: format!("bad magic {magic:#010x}, expected {LABEL_MAGIC:#010x} (labels)"),
        });
    }
    let label_count = labels_file.read_u32_be()? as usize;
    if label_count != count {
        return Err(Error::Consistency(format!(
            "{count} images but {label_count} labels"
        )));
    }
    let mut raw_labels = vec![0u8; label_count];
    labels_file.read_exact(&mut raw_labels)?;

    let features = Array2::from_shape_vec(
        (count, dim),
        pixels.into_iter().map(|p| p as f64 / 255.0).collect(),
    )
    .expect("length matches by construction");
    let labels: Vec<usize> = raw_labels.into_iter().map(|l| l as usize).collect();
    let class_count = labels.iter().copied().max().map_or(1, |m| m + 1);
    LabeledDataset::new(features, labels, class_count)
}

/// Writes a dataset as an IDX pair (images shaped `count × 1 × dim`).
///
/// Features are quantized to bytes with `round(v * 255)` clamped to
/// `[0, 255]`, so a write/load round trip reproduces values to within one
/// quantization step.
pub fn write_idx(dataset: &LabeledDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let file = File::create(images_path).map_err(|e| Error::io(images_path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let img_err = |e: std::io::Error| Error::io(images_path.display().to_string(), e);
    w.write_all(&IMAGE_MAGIC.to_be_bytes()).map_err(img_err)?;
    w.write_all(&(dataset.len() as u32).to_be_bytes()).map_err(img_err)?;
    w.write_all(&1u32.to_be_bytes()).map_err(img_err)?;
    w.write_all(&(dataset.dim() as u32).to_be_bytes()).map_err(img_err)?;
    let bytes: Vec<u8> = dataset
        .features()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    w.write_all(&bytes).map_err(img_err)?;
    w.flush().map_err(img_err)?;

    let file = File::create(labels_path).map_err(|e| Error::io(labels_path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let lbl_err = |e: std::io::Error| Error::io(labels_path.display().to_string(), e);
    w.write_all(&LABEL_MAGIC.to_be_bytes()).map_err(lbl_err)?;
    w.write_all(&(dataset.len() as u32).to_be_bytes()).map_err(lbl_err)?;
    let labels: Vec<u8> = dataset.labels().iter().map(|&l| l as u8).collect();
    w.write_all(&labels).map_err(lbl_err)?;
    w.flush().map_err(lbl_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Builds the two-image fixture byte-by-byte: 2 images of 2x2 pixels.
    fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let images = dir.join("imgs.idx3-ubyte");
        let labels = dir.join("lbls.idx1-ubyte");
        let mut img_bytes = Vec::new();
        img_bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        img_bytes.extend_from_slice(&2u32.to_be_bytes()); // count
        img_bytes.extend_from_slice(&2u32.to_be_bytes()); // rows
        img_bytes.extend_from_slice(&2u32.to_be_bytes()); // cols
        img_bytes.extend_from_slice(&[0, 51, 102, 153]); // image 0
        img_bytes.extend_from_slice(&[255, 204, 153, 102]); // image 1
        std::fs::write(&images, &img_bytes).unwrap();
        let mut lbl_bytes = Vec::new();
        lbl_bytes.extend_from_slice(&0x0000_0801u32.to_be_bytes());
        lbl_bytes.extend_from_slice(&2u32.to_be_bytes());
        lbl_bytes.extend_from_slice(&[7, 3]);
        std::fs::write(&labels, &lbl_bytes).unwrap();
        (images, labels)
    }

    #[test]
    fn hand_built_fixture_round_trips_exact_values() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = fixture(dir.path());
        let d = load_idx(&images, &labels).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 4);
        assert_eq!(d.labels(), &[7, 3]);
        assert_eq!(d.class_count(), 8);
        let expected0 = [0.0, 51.0 / 255.0, 102.0 / 255.0, 153.0 / 255.0];
        for (a, b) in d.features().row(0).iter().zip(expected0) {
            assert_eq!(*a, b);
        }
        assert_eq!(d.features()[[1, 0]], 1.0);
        assert!(d.in_unit_range());
    }

    #[test]
    fn images_file_with_label_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = fixture(dir.path());
        // Swap the arguments: the labels file has the label magic.
        let err = load_idx(&labels, &images).unwrap_err();
        match err {
            Error::Format { reason, .. } => assert!(reason.contains("bad magic")),
            other => panic!("expected format error, got {other}"),
        }
    }

    #[test]
    fn count_mismatch_is_a_consistency_error() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = fixture(dir.path());
        let mut bytes = std::fs::read(&labels).unwrap();
        bytes[7] = 3; // claim 3 labels
        bytes.push(1);
        std::fs::write(&labels, &bytes).unwrap();
        assert!(matches!(load_idx(&images, &labels), Err(Error::Consistency(_))));
    }

    #[test]
    fn truncated_images_report_io_error_with_offset() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = fixture(dir.path());
        let bytes = std::fs::read(&images).unwrap();
        std::fs::write(&images, &bytes[..bytes.len() - 3]).unwrap();
        match load_idx(&images, &labels).unwrap_err() {
            Error::Io { source, .. } => {
                assert!(source.to_string().contains("truncated at byte"));
            }
            other => panic!("expected io error, got {other}"),
        }
    }

    /// Runs only when `FRS_MNIST_DIR` points at the canonical IDX files.
    #[test]
    fn real_mnist_training_pair_has_published_dimensions() {
        let Ok(dir) = std::env::var("FRS_MNIST_DIR") else {
            return;
        };
        let dir = Path::new(&dir);
        let d = load_idx(
            &dir.join("train-images-idx3-ubyte"),
            &dir.join("train-labels-idx1-ubyte"),
        )
        .unwrap();
        assert_eq!(d.len(), 60_000);
        assert_eq!(d.dim(), 784);
        assert_eq!(d.class_count(), 10);
        assert!(d.in_unit_range());
    }

    #[test]
    fn write_then_load_round_trips_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let features = Array2::from_shape_fn((6, 5), |(i, j)| ((i * 5 + j) as f64) / 29.0);
        let labels: Vec<usize> = (0..6).map(|i| i % 3).collect();
        let d = LabeledDataset::new(features, labels, 3).unwrap();
        let images = dir.path().join("x.idx3-ubyte");
        let lbls = dir.path().join("y.idx1-ubyte");
        write_idx(&d, &images, &lbls).unwrap();
        let back = load_idx(&images, &lbls).unwrap();
        assert_eq!(back.labels(), d.labels());
        for (a, b) in back.features().iter().zip(d.features().iter()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}
