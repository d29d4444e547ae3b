//! The MCV container.
//!
//! ```text
//! offset 0   8 bytes  magic "MCVOL\0\0\x01"
//! offset 8   4 bytes  header length L, u32 little-endian
//! offset 12  L bytes  UTF-8 JSON {"dtype":..,"layout":..,"shape":[..]}
//! offset 12+L         payload, product(shape) elements, little-endian
//! ```
//!
//! `dtype` is `"f32"` (4 bytes per element) or `"u8"`. Volumes use layout
//! `"CHW"`, label maps `"HW"`; network parameters use their own layout tags.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LabelMap, MultiChannelVolume, DEFAULT_CLASSES};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"MCVOL\0\0\x01";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct Header {
    pub dtype: String,
    pub layout: String,
    pub shape: Vec<usize>,
}

fn encode(header: &Header, payload: &[u8]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + payload.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(payload);
    out
}

fn decode(bytes: &[u8]) -> Result<(Header, &[u8])> {
    if bytes.len() < 12 {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the 12-byte preamble",
            bytes.len()
        )));
    }
    if bytes[..8] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let rest = &bytes[12..];
    if rest.len() < len {
        return Err(Error::Format(format!(
            "header declares {len} bytes but only {} follow",
            rest.len()
        )));
    }
    let header: Header = serde_json::from_slice(&rest[..len])
        .map_err(|e| Error::Format(format!("header json: {e}")))?;
    let elem = match header.dtype.as_str() {
        "f32" => 4,
        "u8" => 1,
        other => return Err(Error::Format(format!("unknown dtype tag {other:?}"))),
    };
    if header.shape.is_empty() || header.shape.iter().any(|&d| d == 0) {
        return Err(Error::Format(format!("invalid shape {:?}", header.shape)));
    }
    let count = header
        .shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(elem))
        .ok_or_else(|| Error::Format(format!("shape {:?} overflows", header.shape)))?;
    let payload = &rest[len..];
    if payload.len() < count {
        return Err(Error::Truncation {
            expected: count,
            found: payload.len(),
        });
    }
    if payload.len() > count {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            payload.len() - count
        )));
    }
    Ok((header, payload))
}

fn f32_payload(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes an arbitrary f32 tensor with the given layout tag.
pub fn save_tensor(path: impl AsRef<Path>, layout: &str, shape: &[usize], values: &[f32]) -> Result<()> {
    let expected: usize = shape.iter().product();
    if shape.is_empty() || expected != values.len() {
        return Err(Error::Argument(format!(
            "shape {shape:?} does not match {} values",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("refusing to write non-finite values".into()));
    }
    let header = Header {
        dtype: "f32".into(),
        layout: layout.into(),
        shape: shape.to_vec(),
    };
    write(path.as_ref(), &encode(&header, &f32_payload(values)))
}

/// Reads an f32 tensor, returning its layout tag, shape and values.
pub fn load_tensor(path: impl AsRef<Path>) -> Result<(String, Vec<usize>, Vec<f32>)> {
    let bytes = read(path.as_ref())?;
    let (header, payload) = decode(&bytes)?;
    if header.dtype != "f32" {
        return Err(Error::Format(format!("expected dtype f32, found {}", header.dtype)));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header.layout, header.shape, values))
}

pub fn save_volume(path: impl AsRef<Path>, v: &MultiChannelVolume) -> Result<()> {
    save_tensor(path, "CHW", &[v.channels(), v.height(), v.width()], v.data())
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<MultiChannelVolume> {
    let (layout, shape, values) = load_tensor(path)?;
    if layout != "CHW" || shape.len() != 3 {
        return Err(Error::Format(format!(
            "expected CHW volume, found layout {layout} with shape {shape:?}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("volume contains non-finite values".into()));
    }
    MultiChannelVolume::new(shape[0], shape[1], shape[2], values)
}

pub fn save_labels(path: impl AsRef<Path>, labels: &LabelMap) -> Result<()> {
    let header = Header {
        dtype: "u8".into(),
        layout: "HW".into(),
        shape: vec![labels.height(), labels.width()],
    };
    write(path.as_ref(), &encode(&header, labels.labels()))
}

/// Loads a label map. `n_classes` defaults to 6 (ignore index 6).
pub fn load_labels(path: impl AsRef<Path>, n_classes: Option<usize>) -> Result<LabelMap> {
    let bytes = read(path.as_ref())?;
    let (header, payload) = decode(&bytes)?;
    if header.dtype != "u8" || header.layout != "HW" || header.shape.len() != 2 {
        return Err(Error::Format(format!(
            "expected u8 HW label map, found {} {} {:?}",
            header.dtype, header.layout, header.shape
        )));
    }
    LabelMap::new(
        header.shape[0],
        header.shape[1],
        n_classes.unwrap_or(DEFAULT_CLASSES),
        payload.to_vec(),
    )
    .map_err(|e| Error::Format(e.to_string()))
}
