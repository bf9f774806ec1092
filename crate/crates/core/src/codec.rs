//! Canonical JSON text form for architectures.
//!
//! Object keys are always emitted in sorted order with no whitespace, and
//! numbers use the shortest round-trip representation, so the bytes are stable
//! and can be hashed. [`structure_key`] covers only the structural part
//! (`input_shape`, `layers`, `num_classes`) and is the deduplication key.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::arch::Architecture;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("layer {index}: hyperparameter out of range")]
    BadParameter { index: usize },
    #[error("input shape and class count must be positive")]
    BadInput,
}

/// Writes `value` as compact JSON with object keys sorted.
pub fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(&Value::String((*k).clone()), out);
                out.push(':');
                write_canonical(&map[k.as_str()], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        // Scalars have a single compact form in serde_json.
        other => out.push_str(&other.to_string()),
    }
}

/// Canonical JSON for any serializable value.
pub fn to_canonical<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("in-memory values always serialize");
    let mut out = String::new();
    write_canonical(&v, &mut out);
    out
}

/// Full canonical form, including id, provenance and timestamp.
pub fn serialize(arch: &Architecture) -> String {
    to_canonical(arch)
}

/// Parses the canonical form (key order and whitespace are not significant).
pub fn deserialize(text: &str) -> Result<Architecture, DecodeError> {
    let arch: Architecture = serde_json::from_str(text).map_err(|e| DecodeError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let s = arch.input_shape;
    if s.height == 0 || s.width == 0 || s.channels == 0 || arch.num_classes == 0 {
        return Err(DecodeError::BadInput);
    }
    if let Some(index) = arch.layers.iter().position(|l| !l.params_in_range()) {
        return Err(DecodeError::BadParameter { index });
    }
    Ok(arch)
}

#[derive(Serialize)]
struct Structure<'a> {
    input_shape: &'a crate::arch::InputShape,
    layers: &'a [crate::arch::LayerSpec],
    num_classes: u32,
}

/// Canonical bytes of the structure only; equal for structurally equal archs.
pub fn structure_key(arch: &Architecture) -> String {
    to_canonical(&Structure {
        input_shape: &arch.input_shape,
        layers: &arch.layers,
        num_classes: arch.num_classes,
    })
}

/// SHA-256 of [`structure_key`].
pub fn structure_hash(arch: &Architecture) -> [u8; 32] {
    let digest = Sha256::digest(structure_key(arch).as_bytes());
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    out
}

/// First eight bytes of [`structure_hash`] as an integer seed.
pub fn structure_seed(arch: &Architecture) -> u64 {
    let h = structure_hash(arch);
    u64::from_be_bytes([h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7]])
}

/// Short id derived from the structural hash, e.g. `a-3f9c0e12d4b7a651`.
pub fn fingerprint_id(arch: &Architecture) -> String {
    let h = structure_hash(arch);
    let mut s = String::from("a-");
    for b in &h[..8] {
        let _ = write!(s, "{b:02x}");
    }
    s
}
