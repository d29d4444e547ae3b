mod support;

use mcseg_core::fcn::{build_fcn, NetworkConfig, Tensor};
use mcseg_core::rng::SplitMix64;
use mcseg_core::trainer::{masked_cross_entropy, train, LossMode, Strategy, TrainConfig};
use mcseg_core::volume_io::{generate_phantom, ignore_boundary, PhantomSpec};
use mcseg_core::{Error, LabelMap};
use proptest::prelude::*;
use support::training::{ignored_scores_are_inert, overfit_accuracy, strategy_losses};

#[test]
fn ignore_bound_loss_never_exceeds_fully_bp() {
    for seed in 0..20 {
        let (ib, fb) = strategy_losses(seed);
        assert!(ib <= fb, "seed {seed}: {ib} > {fb}");
    }
}

#[test]
fn ignored_pixels_do_not_reach_the_gradients() {
    for seed in 0..10 {
        assert!(ignored_scores_are_inert(seed), "seed {seed}");
    }
}

#[test]
fn single_phantom_overfits() {
    let acc = overfit_accuracy(1);
    assert!(acc >= 0.95, "train pixel accuracy {acc}");
}

fn small_dataset(n: u64) -> Vec<(mcseg_core::MultiChannelVolume, LabelMap)> {
    (0..n)
        .map(|i| {
            let (v, l) = generate_phantom(&PhantomSpec::new(32, 24, 50.0, i)).unwrap();
            let (r, _) = mcseg_core::pca::reduce_volume(&v, &mcseg_core::pca::PcaOptions::with_k(3)).unwrap();
            (r, ignore_boundary(&l, 1))
        })
        .collect()
}

#[test]
fn identical_seeds_give_identical_histories() {
    let data = small_dataset(3);
    let cfg = TrainConfig { iterations: 30, eval_every: 10, ..TrainConfig::default() };
    let run = || {
        let mut net = build_fcn::<f32>(&NetworkConfig::tiny(3, 6).with_seed(5)).unwrap();
        let r = train(&mut net, &data[..2], Some(&data[2]), &cfg, &mut |_, _| Ok(())).unwrap();
        (r, net.params().to_vec())
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a, b);
    assert_eq!(pa, pb);
    assert_eq!(a.history.first().unwrap().iteration, 0);
    assert_eq!(a.history.last().unwrap().iteration, 30);
    assert_eq!(a.step_losses.len(), 30);
}

#[test]
fn vanishing_rate_leaves_weights_alone() {
    let data = small_dataset(2);
    let mut net = build_fcn::<f32>(&NetworkConfig::tiny(3, 6)).unwrap();
    let before = net.params().to_vec();
    let cfg = TrainConfig { iterations: 5, learning_rate: 1e-300, ..TrainConfig::default() };
    train(&mut net, &data, None, &cfg, &mut |_, _| Ok(())).unwrap();
    assert_eq!(net.params(), &before[..]);
}

#[test]
fn abort_keeps_partial_history() {
    let data = small_dataset(2);
    let mut net = build_fcn::<f32>(&NetworkConfig::tiny(3, 6)).unwrap();
    let cfg = TrainConfig { iterations: 20, eval_every: 5, ..TrainConfig::default() };
    let err = train(&mut net, &data, None, &cfg, &mut |it, _| {
        if it == 12 {
            Err(Error::Numerics { iteration: it, detail: "injected".into() })
        } else {
            Ok(())
        }
    })
    .unwrap_err();
    assert!(matches!(err.error, Error::Numerics { iteration: 12, .. }));
    assert_eq!(err.partial.step_losses.len(), 12);
    assert_eq!(err.partial.history.iter().map(|r| r.iteration).collect::<Vec<_>>(), vec![0, 5, 10]);
}

#[test]
fn fully_bp_rejects_banded_training_labels() {
    let data = small_dataset(1);
    let mut net = build_fcn::<f32>(&NetworkConfig::tiny(3, 6)).unwrap();
    let cfg = TrainConfig { strategy: Strategy::FullyBp, iterations: 1, ..TrainConfig::default() };
    let err = train(&mut net, &data, None, &cfg, &mut |_, _| Ok(())).unwrap_err();
    assert!(matches!(err.error, Error::Strategy(_)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_is_pixel_permutation_equivariant(seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let (c, n) = (6, 24);
        let logits: Vec<f64> = (0..c * n).map(|_| rng.uniform() + 0.01).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.below(c + 1) as u8).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        let permuted_scores: Vec<f64> = (0..c * n).map(|i| logits[(i / n) * n + perm[i % n]]).collect();
        let permuted_labels: Vec<u8> = (0..n).map(|p| labels[perm[p]]).collect();
        let a = masked_cross_entropy(
            &Tensor::new(c, 1, n, logits).unwrap(),
            &LabelMap::new(1, n, c, labels).unwrap(),
            Strategy::IgnoreBound,
            LossMode::Sum,
        ).unwrap();
        let b = masked_cross_entropy(
            &Tensor::new(c, 1, n, permuted_scores).unwrap(),
            &LabelMap::new(1, n, c, permuted_labels).unwrap(),
            Strategy::IgnoreBound,
            LossMode::Sum,
        ).unwrap();
        prop_assert!((a.loss - b.loss).abs() <= 1e-12 * a.loss.abs().max(1.0));
        prop_assert_eq!(a.pixels, b.pixels);
    }
}
