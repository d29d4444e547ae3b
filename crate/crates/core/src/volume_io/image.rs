use std::fs;
use std::path::Path;

use super::LabelMap;
use crate::error::{Error, Result};

/// RGB colors for classes 0..=5 and the ignore index 6.
pub const PALETTE: [[u8; 3]; 7] = [
    [0, 0, 0],       // 0 background
    [0, 114, 178],   // 1 cerebrospinal fluid
    [230, 159, 0],   // 2 vertebral body fluid
    [0, 158, 115],   // 3 lumbar disc
    [86, 180, 233],  // 4 spinal fluid
    [240, 228, 66],  // 5 bone
    [255, 255, 255], // 6 ignore
];

/// Binary greymap (P5) holding the raw label values, maxval = ignore index.
pub fn save_pgm(path: impl AsRef<Path>, labels: &LabelMap) -> Result<()> {
    let path = path.as_ref();
    let maxval = labels.ignore_index().max(1);
    let mut out = format!("P5\n{} {}\n{}\n", labels.width(), labels.height(), maxval).into_bytes();
    out.extend_from_slice(labels.labels());
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Color pixmap (P6). The ignore index always maps to the last palette
/// entry; class indices beyond the palette wrap around the class colors.
pub fn save_ppm(path: impl AsRef<Path>, labels: &LabelMap) -> Result<()> {
    let path = path.as_ref();
    let ig = labels.ignore_index();
    let mut out = format!("P6\n{} {}\n255\n", labels.width(), labels.height()).into_bytes();
    for &l in labels.labels() {
        let color = if l == ig {
            PALETTE[6]
        } else {
            PALETTE[l as usize % 6]
        };
        out.extend_from_slice(&color);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
