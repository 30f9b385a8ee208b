//! IDX binary files as distributed with MNIST: big-endian headers, `u8`
//! payloads. Images use magic 2051 (`0x00000803`), labels 2049
//! (`0x00000801`).

use std::fs;
use std::io::Write;
use std::path::Path;

use super::Dataset;
use crate::numerics::Tensor2;
use crate::{Error, Real, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format("truncated IDX header".into()))
}

/// Parses an image file into `(count, rows, cols, pixels)`.
pub fn read_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!("bad image magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let len = n
        .checked_mul(rows)
        .and_then(|x| x.checked_mul(cols))
        .ok_or_else(|| Error::Format("image dimensions overflow".into()))?;
    let payload = &bytes[16..];
    if payload.len() != len {
        return Err(Error::Format(format!(
            "image payload has {} bytes, header implies {len}",
            payload.len()
        )));
    }
    Ok((n, rows, cols, payload))
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!("bad label magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(Error::Format(format!(
            "label payload has {} bytes, header says {n}",
            payload.len()
        )));
    }
    Ok(payload)
}

/// Loads an image/label IDX pair; pixels are scaled to `[0, 1]` and
/// flattened row-major.
pub fn load_idx<T: Real>(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let img_bytes = fs::read(images_path)?;
    let lbl_bytes = fs::read(labels_path)?;
    let (n, rows, cols, pixels) = read_idx_images(&img_bytes)?;
    let labels = read_idx_labels(&lbl_bytes)?;
    if labels.len() != n {
        return Err(Error::Format(format!("{n} images but {} labels", labels.len())));
    }
    let scale = T::lit(1.0 / 255.0);
    let features = pixels.iter().map(|&p| T::lit(f64::from(p)) * scale).collect();
    let labels: Vec<usize> = labels.iter().map(|&y| usize::from(y)).collect();
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(Tensor2::new(n, rows * cols, features)?, labels, class_count)
}

pub fn write_idx_images<W: Write>(mut out: W, rows: usize, cols: usize, images: &[Vec<u8>]) -> Result<()> {
    if images.iter().any(|im| im.len() != rows * cols) {
        return Err(Error::invalid("image size does not match rows x cols"));
    }
    out.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    for v in [images.len(), rows, cols] {
        out.write_all(&(v as u32).to_be_bytes())?;
    }
    for im in images {
        out.write_all(im)?;
    }
    Ok(())
}

pub fn write_idx_labels<W: Write>(mut out: W, labels: &[u8]) -> Result<()> {
    out.write_all(&LABELS_MAGIC.to_be_bytes())?;
    out.write_all(&(labels.len() as u32).to_be_bytes())?;
    out.write_all(labels)?;
    Ok(())
}
