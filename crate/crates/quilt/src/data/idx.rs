//! IDX binary files (the MNIST on-disk format).
//!
//! Image file: big-endian magic `0x00000803`, then `i32` count, rows, cols,
//! then `count * rows * cols` unsigned bytes. Label file: magic
//! `0x00000801`, `i32` count, then `count` unsigned bytes.

use super::{LabelSchema, PartialLabelVector, Sample, SourceDataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::fs;
use std::path::Path;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::contract(format!(
            "{}: truncated header (need {end} bytes, have {})",
            path.display(),
            bytes.len()
        )));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let actual = read_u32(bytes, 0, path)?;
    if actual != expected {
        return Err(Error::BadMagic {
            path: path.display().to_string(),
            expected,
            actual,
        });
    }
    Ok(())
}

/// Loads an IDX image/label pair as a fully labeled 10-digit dataset.
///
/// Label byte `d` becomes `Positive` at class `"d"` and `Negative`
/// everywhere else; pixel bytes are scaled into `[0, 1]` by `1/255`.
pub fn load_idx(image_path: &Path, label_path: &Path) -> Result<SourceDataset> {
    let images = fs::read(image_path)
        .map_err(|e| Error::io(format!("reading {}", image_path.display()), e))?;
    let labels = fs::read(label_path)
        .map_err(|e| Error::io(format!("reading {}", label_path.display()), e))?;

    check_magic(&images, IMAGE_MAGIC, image_path)?;
    check_magic(&labels, LABEL_MAGIC, label_path)?;

    let count = read_u32(&images, 4, image_path)? as usize;
    let rows = read_u32(&images, 8, image_path)? as usize;
    let cols = read_u32(&images, 12, image_path)? as usize;
    let label_count = read_u32(&labels, 4, label_path)? as usize;
    if count != label_count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_count,
        });
    }

    let pixel_bytes = count * rows * cols;
    if images.len() < 16 + pixel_bytes {
        return Err(Error::contract(format!(
            "{}: payload holds {} bytes, header promises {pixel_bytes}",
            image_path.display(),
            images.len() - 16
        )));
    }
    if labels.len() < 8 + count {
        return Err(Error::contract(format!(
            "{}: payload holds {} labels, header promises {count}",
            label_path.display(),
            labels.len() - 8
        )));
    }

    let schema = LabelSchema::digits();
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let start = 16 + i * rows * cols;
        let pixels: Vec<f64> = images[start..start + rows * cols]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        let digit = labels[8 + i] as usize;
        if digit > 9 {
            return Err(Error::contract(format!(
                "{}: label byte {digit} is not a digit",
                label_path.display()
            )));
        }
        samples.push(Sample {
            image: Tensor::new(&[rows, cols], pixels)?,
            labels: PartialLabelVector::one_hot(10, digit),
        });
    }

    let name = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".to_string());
    SourceDataset::new(name, schema, samples)
}

/// Writes images as an IDX file. All images must share one H x W shape.
pub fn write_idx_images(path: &Path, samples: &[Sample]) -> Result<()> {
    let (rows, cols) = match samples.first() {
        Some(s) => {
            let shape = s.image.shape();
            (shape[0], shape[1])
        }
        None => (0, 0),
    };
    let mut bytes = Vec::with_capacity(16 + samples.len() * rows * cols);
    bytes.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(samples.len() as u32).to_be_bytes());
    bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    for s in samples {
        debug_assert_eq!(s.image.shape(), vec![rows, cols]);
        for &v in s.image.values().iter() {
            bytes.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Writes each sample's positive class index as an IDX label file.
/// Requires every sample to have exactly one `Positive` state.
pub fn write_idx_labels(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + samples.len());
    bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(samples.len() as u32).to_be_bytes());
    for (i, s) in samples.iter().enumerate() {
        let mut pos = s.labels.positives();
        let (Some(class), None) = (pos.next(), pos.next()) else {
            return Err(Error::contract(format!(
                "sample {i} does not have exactly one positive class"
            )));
        };
        bytes.push(class as u8);
    }
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
