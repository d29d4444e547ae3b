//! Per-pixel set-counting evaluation of the four metrics, rational until
//! the final rounding.

use mcseg_core::rng::SplitMix64;
use mcseg_core::LabelMap;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mean_iu: f64,
    pub fw_iu: f64,
    pub pixel_acc: f64,
    pub mean_acc: f64,
}

fn r(n: usize, d: usize) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// `classes` are the ones averaged over; `None` means all.
pub fn brute_force(gt: &LabelMap, pred: &LabelMap, exclude: Option<u8>) -> Option<Metrics> {
    let ignore = gt.ignore_index();
    let pixels: Vec<(u8, u8)> = gt
        .labels()
        .iter()
        .zip(pred.labels())
        .filter(|(g, _)| **g != ignore)
        .map(|(g, p)| (*g, *p))
        .collect();
    let classes: Vec<u8> = (0..gt.n_classes() as u8).filter(|c| Some(*c) != exclude).collect();
    let counted = pixels.iter().filter(|(g, _)| classes.contains(g)).count();
    if counted == 0 {
        return None;
    }
    let (mut ius, mut accs) = (Vec::new(), Vec::new());
    let (mut fw, mut correct) = (BigRational::zero(), 0);
    for &c in &classes {
        let truth = pixels.iter().filter(|(g, _)| *g == c).count();
        let inter = pixels.iter().filter(|(g, p)| *g == c && *p == c).count();
        let union = pixels.iter().filter(|(g, p)| *g == c || *p == c).count();
        correct += inter;
        if union > 0 {
            ius.push(r(inter, union));
            fw += r(inter * truth, union);
        }
        if truth > 0 {
            accs.push(r(inter, truth));
        }
    }
    let avg = |v: &[BigRational]| {
        let s = v.iter().fold(BigRational::zero(), |a, b| a + b);
        (s / BigRational::from_integer(v.len().into())).to_f64().unwrap()
    };
    Some(Metrics {
        mean_iu: avg(&ius),
        fw_iu: (fw / BigRational::from_integer(counted.into())).to_f64().unwrap(),
        pixel_acc: r(correct, counted).to_f64().unwrap(),
        mean_acc: avg(&accs),
    })
}

/// A random ground truth (with some ignored pixels) and a prediction that
/// agrees with it on roughly half the pixels.
pub fn random_pair(seed: u64) -> (LabelMap, LabelMap) {
    let mut rng = SplitMix64::new(seed);
    let h = 1 + rng.below(16);
    let w = 1 + rng.below(16);
    let n = 2 + rng.below(5);
    let ignore_rate = rng.uniform() * 0.3;
    let gt: Vec<u8> = (0..h * w)
        .map(|_| if rng.uniform() < ignore_rate { n as u8 } else { rng.below(n) as u8 })
        .collect();
    let pred: Vec<u8> = gt
        .iter()
        .map(|&g| if g < n as u8 && rng.uniform() < 0.5 { g } else { rng.below(n) as u8 })
        .collect();
    (LabelMap::new(h, w, n, gt).unwrap(), LabelMap::new(h, w, n, pred).unwrap())
}

/// Whether both metric variants of one random pair equal the oracle
/// exactly (or are undefined together).
pub fn matches_oracle(seed: u64) -> bool {
    use mcseg_core::metrics::{compute_metrics, confusion, main_tissue_metrics, MetricsReport};
    let as_metrics = |r: MetricsReport| Metrics {
        mean_iu: r.mean_iu,
        fw_iu: r.fw_iu,
        pixel_acc: r.pixel_acc,
        mean_acc: r.mean_acc,
    };
    let (gt, pred) = random_pair(seed);
    let cm = confusion(&gt, &pred).unwrap();
    cm.total() as usize == gt.labels().len() - gt.count_ignored()
        && brute_force(&gt, &pred, None) == compute_metrics(&cm).ok().map(as_metrics)
        && brute_force(&gt, &pred, Some(0)) == main_tissue_metrics(&cm, 0).ok().map(as_metrics)
}
