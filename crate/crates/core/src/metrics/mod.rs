//! Confusion matrices and the four segmentation metrics.
//!
//! Per-class ratios are combined in exact rational arithmetic and rounded
//! to `f64` once at the end, so results do not depend on summation order.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume_io::LabelMap;

/// `counts[i][j]`: pixels of ground-truth class `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n: n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Argument("confusion matrix must be square".into()));
        }
        Ok(Self {
            n,
            counts: rows.concat(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.n + pred]
    }

    pub fn add(&mut self, gt: usize, pred: usize) {
        self.counts[gt * self.n + pred] += 1;
    }

    /// `s_i`: pixels whose ground truth is `i`.
    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i * self.n..(i + 1) * self.n].iter().sum()
    }

    /// Pixels predicted as `j`.
    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n.max(1)).map(<[u64]>::to_vec).collect()
    }

    /// Ground-truth rows, prediction columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gt\\pred");
        for j in 0..self.n {
            out.push_str(&format!(",{j}"));
        }
        out.push('\n');
        for i in 0..self.n {
            out.push_str(&i.to_string());
            for j in 0..self.n {
                out.push_str(&format!(",{}", self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// Tallies every pixel whose ground truth is not the ignore index.
pub fn confusion(gt: &LabelMap, pred: &LabelMap) -> Result<ConfusionMatrix> {
    if (gt.height(), gt.width()) != (pred.height(), pred.width()) {
        return Err(Error::Argument(format!(
            "ground truth is {}x{} but prediction is {}x{}",
            gt.height(),
            gt.width(),
            pred.height(),
            pred.width()
        )));
    }
    let n = gt.n_classes();
    if pred.labels().iter().any(|&p| p as usize >= n) {
        return Err(Error::Argument(format!(
            "prediction contains labels outside 0..{n}"
        )));
    }
    let ignore = gt.ignore_index();
    let mut cm = ConfusionMatrix::new(n);
    for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
        if g != ignore {
            cm.add(g as usize, p as usize);
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    AllClasses,
    MainTissues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: Variant,
    pub mean_iu: f64,
    pub fw_iu: f64,
    pub pixel_acc: f64,
    pub mean_acc: f64,
    pub confusion: Vec<Vec<u64>>,
    /// Classes left out of the mean IU: no ground-truth and no predicted
    /// pixels. Classes without ground truth are always left out of the mean
    /// accuracy.
    pub dropped_classes: Vec<usize>,
}

fn ratio(num: u64, den: u64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("metric ratios are bounded")
}

fn mean(values: &[BigRational]) -> BigRational {
    let sum = values.iter().fold(BigRational::zero(), |a, b| a + b);
    sum / BigInt::from(values.len())
}

fn report(cm: &ConfusionMatrix, classes: &[usize], variant: Variant) -> Result<MetricsReport> {
    let s: Vec<u64> = (0..cm.n).map(|i| cm.row_sum(i)).collect();
    let total: u64 = classes.iter().map(|&i| s[i]).sum();
    if total == 0 {
        return Err(Error::UndefinedMetrics);
    }
    let mut ius = Vec::new();
    let mut accs = Vec::new();
    let mut dropped = Vec::new();
    let mut fw = BigRational::zero();
    let mut correct = 0;
    for &i in classes {
        let nii = cm.get(i, i);
        let union = s[i] + cm.col_sum(i) - nii;
        correct += nii;
        if union == 0 {
            dropped.push(i);
        } else {
            let iu = ratio(nii, union);
            fw += &iu * BigInt::from(s[i]);
            ius.push(iu);
        }
        if s[i] > 0 {
            accs.push(ratio(nii, s[i]));
        }
    }
    Ok(MetricsReport {
        variant,
        mean_iu: to_f64(&mean(&ius)),
        fw_iu: to_f64(&(fw / BigInt::from(total))),
        pixel_acc: to_f64(&ratio(correct, total)),
        mean_acc: to_f64(&mean(&accs)),
        confusion: cm.rows(),
        dropped_classes: dropped,
    })
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let classes: Vec<usize> = (0..cm.n).collect();
    report(cm, &classes, Variant::AllClasses)
}

/// Per-class quantities come from the full matrix (background confusions
/// stay in the denominators); only the averages and the pixel accuracy
/// leave the background class out.
pub fn main_tissue_metrics(cm: &ConfusionMatrix, background: usize) -> Result<MetricsReport> {
    if background >= cm.n {
        return Err(Error::Argument(format!(
            "background class {background} outside 0..{}",
            cm.n
        )));
    }
    let classes: Vec<usize> = (0..cm.n).filter(|&i| i != background).collect();
    report(cm, &classes, Variant::MainTissues)
}

/// Both variants for one prediction.
pub fn evaluate(gt: &LabelMap, pred: &LabelMap) -> Result<[MetricsReport; 2]> {
    let cm = confusion(gt, pred)?;
    Ok([compute_metrics(&cm)?, main_tissue_metrics(&cm, 0)?])
}
