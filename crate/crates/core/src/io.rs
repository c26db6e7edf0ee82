//! Raw little-endian float32 blobs and JSON sidecars.
//!
//! Every on-disk artifact (recordings, epochs, filter banks, checkpoints)
//! uses the same convention: a headerless `.f32` file holding row-major
//! little-endian 32-bit floats, with its shape recorded in a JSON file
//! next to it.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

pub fn write_f32<P: AsRef<Path>>(path: P, values: impl IntoIterator<Item = f32>) -> Result<()> {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Read a blob that must hold exactly `expected` floats.
pub fn read_f32<P: AsRef<Path>>(path: P, expected: usize) -> Result<Vec<f32>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    if bytes.len() != expected * 4 {
        return Err(Error::ShapeMismatch(format!(
            "{} holds {} bytes, expected {} floats ({} bytes)",
            path.display(),
            bytes.len(),
            expected,
            expected * 4
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_json<P: AsRef<Path>, T: Serialize>(path: P, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<P: AsRef<Path>, T: DeserializeOwned>(path: P) -> Result<T> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::CorruptHeader {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
