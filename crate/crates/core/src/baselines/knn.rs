use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume_io::{LabelMap, MultiChannelVolume};

/// One median vector per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianModel {
    medians: Vec<Vec<f64>>,
}

impl MedianModel {
    pub fn new(medians: Vec<Vec<f64>>) -> Result<Self> {
        let dim = medians.first().map_or(0, Vec::len);
        if medians.is_empty() || dim == 0 {
            return Err(Error::Argument("median model needs at least one class and dimension".into()));
        }
        for (c, m) in medians.iter().enumerate() {
            if m.len() != dim {
                return Err(Error::Argument(format!("median of class {c} has {} dims, expected {dim}", m.len())));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Argument(format!("median of class {c} is not finite")));
            }
            if m.iter().all(|v| *v == 0.0) {
                return Err(Error::Argument(format!("median of class {c} is the zero vector")));
            }
        }
        Ok(Self { medians })
    }

    pub fn n_classes(&self) -> usize {
        self.medians.len()
    }

    pub fn dim(&self) -> usize {
        self.medians[0].len()
    }

    pub fn medians(&self) -> &[Vec<f64>] {
        &self.medians
    }
}

/// Per-class, per-dimension lower median.
pub fn fit_medians(pixels: &[(Vec<f64>, usize)], n_classes: usize) -> Result<MedianModel> {
    let dim = pixels.first().map_or(0, |p| p.0.len());
    let mut per_class: Vec<Vec<&[f64]>> = vec![Vec::new(); n_classes];
    for (v, c) in pixels {
        if *c >= n_classes {
            return Err(Error::Argument(format!("class {c} outside 0..{n_classes}")));
        }
        if v.len() != dim {
            return Err(Error::Argument("pixel vectors differ in length".into()));
        }
        per_class[*c].push(v);
    }
    let mut medians = Vec::with_capacity(n_classes);
    for (c, members) in per_class.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::Argument(format!("class {c} has no pixels")));
        }
        let median = (0..dim)
            .map(|d| {
                let mut col: Vec<f64> = members.iter().map(|v| v[d]).collect();
                col.sort_by(f64::total_cmp);
                col[(col.len() - 1) / 2]
            })
            .collect();
        medians.push(median);
    }
    MedianModel::new(medians)
}

/// Medians over every non-ignored pixel of the given samples.
pub fn fit_medians_from_samples(samples: &[(MultiChannelVolume, LabelMap)]) -> Result<MedianModel> {
    let n_classes = samples
        .first()
        .map(|s| s.1.n_classes())
        .ok_or_else(|| Error::Argument("no training samples".into()))?;
    let mut pixels = Vec::new();
    for (v, l) in samples {
        if !l.same_dims(v) || l.n_classes() != n_classes {
            return Err(Error::Argument("labels do not match their volume".into()));
        }
        for p in 0..v.pixels() {
            if !l.is_ignored(p) {
                pixels.push((v.pixel_vector(p), l.labels()[p] as usize));
            }
        }
    }
    fit_medians(&pixels, n_classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnnRule {
    /// Most similar median (largest cosine).
    Nearest,
    /// Least similar median (smallest cosine), the argmin reading of the
    /// rule, kept for comparison.
    Farthest,
}

/// Cosine-similarity classification; ties go to the lowest class index.
pub fn knn_classify(x: &[f64], m: &MedianModel, rule: KnnRule) -> Result<usize> {
    if x.len() != m.dim() {
        return Err(Error::Argument(format!("vector has {} dims, model has {}", x.len(), m.dim())));
    }
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || !nx.is_finite() {
        return Err(Error::Argument("cannot classify a zero or non-finite vector".into()));
    }
    let mut best = 0;
    let mut best_score = f64::NAN;
    for (j, y) in m.medians.iter().enumerate() {
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cos = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / (nx * ny);
        let better = match rule {
            KnnRule::Nearest => cos > best_score,
            KnnRule::Farthest => cos < best_score,
        };
        if j == 0 || better {
            best = j;
            best_score = cos;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnSegmentation {
    pub labels: LabelMap,
    /// Pixels with a zero vector, assigned class 0.
    pub zero_vectors: usize,
    pub elapsed: Duration,
}

pub fn knn_segment(v: &MultiChannelVolume, m: &MedianModel, rule: KnnRule) -> Result<KnnSegmentation> {
    if v.channels() != m.dim() {
        return Err(Error::Argument(format!(
            "volume has {} channels, model expects {}",
            v.channels(),
            m.dim()
        )));
    }
    let start = Instant::now();
    let mut zero_vectors = 0;
    let mut labels = Vec::with_capacity(v.pixels());
    for p in 0..v.pixels() {
        let x = v.pixel_vector(p);
        if x.iter().all(|c| *c == 0.0) {
            zero_vectors += 1;
            labels.push(0);
        } else {
            labels.push(knn_classify(&x, m, rule)? as u8);
        }
    }
    let elapsed = start.elapsed();
    Ok(KnnSegmentation {
        labels: LabelMap::new(v.height(), v.width(), m.n_classes(), labels)?,
        zero_vectors,
        elapsed,
    })
}
