//! Readers for the big-endian IDX containers of the MNIST distribution.

use std::path::Path;

use crate::error::{MilError, Result};

const IMAGES_MAGIC: u32 = 2051;
const LABELS_MAGIC: u32 = 2049;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| MilError::format(None, "truncated IDX header"))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected {
        return Err(MilError::format(
            None,
            format!("IDX magic {magic} does not match expected {expected}"),
        ));
    }
    Ok(())
}

/// Parses an IDX3 image file held in memory. Pixels are returned raw, in `[0, 255]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let pixels = rows * cols;
    let payload = &bytes[16..];
    let expected = n
        .checked_mul(pixels)
        .ok_or_else(|| MilError::format(None, "IDX image dimensions overflow"))?;
    if payload.len() < expected {
        return Err(MilError::format(
            None,
            format!(
                "IDX image payload has {} bytes, header requires {expected}",
                payload.len()
            ),
        ));
    }
    if pixels == 0 {
        return Ok(vec![Vec::new(); n]);
    }
    Ok(payload[..expected]
        .chunks_exact(pixels)
        .map(|img| img.iter().map(|&p| f64::from(p)).collect())
        .collect())
}

/// Parses an IDX1 label file held in memory.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() < n {
        return Err(MilError::format(
            None,
            format!("IDX label payload has {} bytes, header requires {n}", payload.len()),
        ));
    }
    Ok(payload[..n].to_vec())
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    parse_idx_images(&std::fs::read(path)?)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_idx_labels(&std::fs::read(path)?)
}
