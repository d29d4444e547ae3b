//! Training-level contracts: strategy loss ordering, ignore-pixel gradient
//! isolation and the single-sample overfit run.

use mcseg_core::fcn::{build_fcn, NetworkConfig, Tensor};
use mcseg_core::metrics::{compute_metrics, confusion};
use mcseg_core::pca::{reduce_volume, PcaOptions};
use mcseg_core::rng::SplitMix64;
use mcseg_core::trainer::{masked_cross_entropy, predict, train, LossMode, Strategy, TrainConfig};
use mcseg_core::volume_io::{generate_phantom, ignore_boundary, PhantomSpec};
use mcseg_core::LabelMap;

use super::gradcheck::randomize;

fn random_case(seed: u64) -> (mcseg_core::fcn::Network<f64>, Tensor<f64>, LabelMap) {
    let mut rng = SplitMix64::new(seed);
    let (h, w) = (8 + 4 * rng.below(3), 8 + 4 * rng.below(3));
    let mut net = build_fcn::<f64>(&NetworkConfig::tiny(3, 6).with_seed(seed)).unwrap();
    randomize(&mut net, seed.wrapping_mul(31));
    let x = Tensor::new(3, h, w, (0..3 * h * w).map(|_| 255.0 * rng.uniform()).collect()).unwrap();
    // Blocky labels so the boundary band is neither empty nor everything.
    let cell = 2 + rng.below(3);
    let palette: Vec<u8> = (0..64).map(|_| rng.below(6) as u8).collect();
    let labels = (0..h * w).map(|p| palette[((p / w) / cell * 8 + (p % w) / cell) % 64]).collect();
    (net, x, LabelMap::new(h, w, 6, labels).unwrap())
}

/// `(ignore-bound loss on banded labels, fully-bp loss on full labels)`,
/// both summed, for one random network and labeling.
pub fn strategy_losses(seed: u64) -> (f64, f64) {
    let (net, x, full) = random_case(seed);
    let (probs, _) = net.forward(&x).unwrap();
    let banded = ignore_boundary(&full, 1);
    let ib = masked_cross_entropy(&probs, &banded, Strategy::IgnoreBound, LossMode::Sum).unwrap();
    let fb = masked_cross_entropy(&probs, &full, Strategy::FullyBp, LossMode::Sum).unwrap();
    (ib.loss, fb.loss)
}

/// Perturbs the scores of ignored pixels and reports whether the loss and
/// every parameter gradient stay bit-identical.
pub fn ignored_scores_are_inert(seed: u64) -> bool {
    let (net, x, full) = random_case(seed);
    let banded = ignore_boundary(&full, 1);
    let (probs, cache) = net.forward(&x).unwrap();
    let mut rng = SplitMix64::new(seed ^ 0xabc);
    let mut perturbed = probs.clone();
    let n = banded.labels().len();
    for p in 0..n {
        if banded.is_ignored(p) {
            for c in 0..6 {
                perturbed.data_mut()[c * n + p] = rng.uniform();
            }
        }
    }
    let a = masked_cross_entropy(&probs, &banded, Strategy::IgnoreBound, LossMode::Mean).unwrap();
    let b = masked_cross_entropy(&perturbed, &banded, Strategy::IgnoreBound, LossMode::Mean).unwrap();
    let ga = net.backward(&cache, &a.grad).unwrap();
    let gb = net.backward(&cache, &b.grad).unwrap();
    banded.count_ignored() > 0 && a.loss == b.loss && ga == gb && !ga.all_zero()
}

pub const OVERFIT_SIZE: (usize, usize) = (128, 80);
pub const OVERFIT_NOISE: f64 = 200.0;

/// Train pixel accuracy after 200 fully-bp iterations on one phantom.
pub fn overfit_accuracy(seed: u64) -> f64 {
    let (h, w) = OVERFIT_SIZE;
    let (v, labels) = generate_phantom(&PhantomSpec::new(h, w, OVERFIT_NOISE, seed)).unwrap();
    let (reduced, _) = reduce_volume(&v, &PcaOptions::with_k(3)).unwrap();
    let mut net = build_fcn::<f32>(&NetworkConfig::tiny(3, 6).with_seed(seed)).unwrap();
    let cfg = TrainConfig {
        strategy: Strategy::FullyBp,
        iterations: 200,
        learning_rate: 1e-2,
        loss_mode: LossMode::Mean,
        seed,
        ..TrainConfig::default()
    };
    let sample = (reduced, labels);
    train(&mut net, std::slice::from_ref(&sample), None, &cfg, &mut |_, _| Ok(())).unwrap();
    let pred = predict(&net, &sample.0).unwrap();
    compute_metrics(&confusion(&sample.1, &pred).unwrap()).unwrap().pixel_acc
}
