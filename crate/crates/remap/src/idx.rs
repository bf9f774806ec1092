//! IDX binary arrays (the MNIST distribution format).
//!
//! Layout: two zero bytes, a type code (`0x08` = unsigned byte), the number of
//! dimensions, then one big-endian `u32` per dimension followed by the data.

use std::fs;
use std::path::Path;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error)]
pub enum IdxError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic { expected: u32, found: u32 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Decoded unsigned-byte array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<u32>,
    pub data: Vec<u8>,
}

pub fn parse(bytes: &[u8], expected_magic: u32) -> Result<IdxArray, IdxError> {
    if bytes.len() < 4 {
        return Err(IdxError::DimensionMismatch(format!("file is {} bytes, too short for a header", bytes.len())));
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if magic != expected_magic {
        return Err(IdxError::BadMagic { expected: expected_magic, found: magic });
    }
    let ndims = (magic & 0xff) as usize;
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(IdxError::DimensionMismatch(format!("header needs {header} bytes, file has {}", bytes.len())));
    }
    let dims: Vec<u32> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let expected: usize = dims.iter().map(|&d| d as usize).product();
    let body = &bytes[header..];
    if body.len() != expected {
        return Err(IdxError::DimensionMismatch(format!(
            "dimensions {dims:?} need {expected} data bytes, file has {}",
            body.len()
        )));
    }
    Ok(IdxArray { dims, data: body.to_vec() })
}

pub fn read(path: &Path, expected_magic: u32) -> Result<IdxArray, IdxError> {
    let bytes = fs::read(path).map_err(|source| IdxError::Io { path: path.display().to_string(), source })?;
    parse(&bytes, expected_magic)
}

/// Encodes an unsigned-byte array; used by fixtures and the export tests.
pub fn encode(dims: &[u32], data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + data.len());
    out.extend_from_slice(&[0, 0, 0x08, dims.len() as u8]);
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        let bytes = encode(&[3], &[7, 0, 9]);
        assert_eq!(&bytes[..8], &[0, 0, 8, 1, 0, 0, 0, 3]);
        let a = parse(&bytes, LABELS_MAGIC).unwrap();
        assert_eq!(a.dims, vec![3]);
        assert_eq!(a.data, vec![7, 0, 9]);
    }

    #[test]
    fn wrong_magic() {
        let bytes = encode(&[1], &[1]);
        assert!(matches!(parse(&bytes, IMAGES_MAGIC), Err(IdxError::BadMagic { found: 0x801, .. })));
    }

    #[test]
    fn truncated_body() {
        let mut bytes = encode(&[2, 2, 2], &[0; 8]);
        bytes.pop();
        assert!(matches!(parse(&bytes, IMAGES_MAGIC), Err(IdxError::DimensionMismatch(_))));
        assert!(matches!(parse(&[0, 0], IMAGES_MAGIC), Err(IdxError::DimensionMismatch(_))));
    }
}
