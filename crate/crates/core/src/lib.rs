//! Multi-channel echo image segmentation: PCA channel reduction, a fully
//! convolutional network with skip fusion, masked training under two
//! labeling strategies, classical baselines and segmentation metrics.

pub mod baselines;
pub mod error;
pub mod fcn;
pub mod metrics;
pub mod pca;
pub mod rng;
pub mod trainer;
pub mod volume_io;

pub use error::{Error, Result};
pub use volume_io::{LabelMap, MultiChannelVolume};
