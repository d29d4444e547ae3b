//! Data containers, the MCV file format, the echo-decay phantom generator and
//! boundary-band relabeling.

mod boundary;
mod container;
mod image;
mod phantom;

pub use boundary::ignore_boundary;
pub use container::{
    load_labels, load_tensor, load_volume, save_labels, save_tensor, save_volume, MAGIC,
};
pub use image::{save_pgm, save_ppm, PALETTE};
pub use phantom::{generate_phantom, ClassParams, PhantomSpec};

use crate::error::{Error, Result};

pub const DEFAULT_CLASSES: usize = 6;

/// A `channels x height x width` block of intensities, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelVolume {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl MultiChannelVolume {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Argument(format!(
                "volume dims must be positive, got {channels}x{height}x{width}"
            )));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::Argument(format!(
                "volume {channels}x{height}x{width} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "non-finite intensity {} at flat index {i}",
                data[i]
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(channels, height, width, vec![0.0; channels * height * width])
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.pixels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// The `channels`-long vector at flat pixel index `p`.
    pub fn pixel_vector(&self, p: usize) -> Vec<f64> {
        let n = self.pixels();
        (0..self.channels)
            .map(|c| self.data[c * n + p] as f64)
            .collect()
    }
}

/// Per-pixel class indices. Valid values are `0..n_classes` plus the ignore
/// index, which always equals `n_classes` (6 for the default class count).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    n_classes: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, n_classes: usize, labels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Argument(format!(
                "label map dims must be positive, got {height}x{width}"
            )));
        }
        if n_classes == 0 || n_classes > 254 {
            return Err(Error::Argument(format!(
                "class count must be in 1..=254, got {n_classes}"
            )));
        }
        if labels.len() != height * width {
            return Err(Error::Argument(format!(
                "label map {height}x{width} needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize > n_classes) {
            return Err(Error::Argument(format!(
                "label {bad} is neither a class below {n_classes} nor the ignore index {n_classes}"
            )));
        }
        Ok(Self {
            height,
            width,
            n_classes,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, n_classes: usize, value: u8) -> Result<Self> {
        Self::new(height, width, n_classes, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn ignore_index(&self) -> u8 {
        self.n_classes as u8
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn is_ignored(&self, p: usize) -> bool {
        self.labels[p] == self.ignore_index()
    }

    pub fn count_ignored(&self) -> usize {
        let ig = self.ignore_index();
        self.labels.iter().filter(|&&l| l == ig).count()
    }

    pub fn same_dims(&self, v: &MultiChannelVolume) -> bool {
        self.height == v.height() && self.width == v.width()
    }
}
