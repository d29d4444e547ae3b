//! Central finite-difference oracle for every layer and the composed net.

use mcseg_core::fcn::{
    conv2d_backward, conv2d_forward, deconv_backward, deconv_forward, maxpool_backward,
    maxpool_forward, softmax_backward, softmax_forward, ConvGeometry, DeconvGeometry, Network,
    NetworkConfig, ParamKind, Tensor,
};
use mcseg_core::rng::SplitMix64;
use mcseg_core::trainer::{masked_cross_entropy, LossMode, Strategy};
use mcseg_core::LabelMap;

pub const STEP: f64 = 1e-5;
/// Denominator floor: gradients below this magnitude compare absolutely.
pub const FLOOR: f64 = 1e-4;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Max relative error of `analytic` against central differences of `f`
/// around `x`, over every coordinate.
pub fn compare(x: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + STEP;
        let up = f(&probe);
        probe[i] = x[i] - STEP;
        let down = f(&probe);
        probe[i] = x[i];
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * STEP)));
    }
    worst
}

pub fn normals(rng: &mut SplitMix64, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| std * rng.normal()).collect()
}

fn tensor(c: usize, h: usize, w: usize, v: Vec<f64>) -> Tensor<f64> {
    Tensor::new(c, h, w, v).unwrap()
}

fn dot(a: &Tensor<f64>, b: &[f64]) -> f64 {
    a.data().iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conv with stride and padding: checks input, weight and bias gradients
/// of `sum(r * conv(x))` for a random projection `r`.
pub fn conv_error(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let g = ConvGeometry::square(3, 2, 3, 2, 1);
    let (h, w) = (7, 6);
    let x = normals(&mut rng, 2 * h * w, 1.0);
    let wt = normals(&mut rng, g.weight_len(), 0.5);
    let b = normals(&mut rng, 3, 0.5);
    let (oh, ow) = g.output_dims(h, w).unwrap();
    let r = normals(&mut rng, 3 * oh * ow, 1.0);
    let go = tensor(3, oh, ow, r.clone());
    let grads = conv2d_backward(&tensor(2, h, w, x.clone()), &wt, &g, &go).unwrap();
    let f = |x: &[f64], wt: &[f64], b: &[f64]| dot(&conv2d_forward(&tensor(2, h, w, x.to_vec()), wt, b, &g).unwrap(), &r);
    compare(&x, grads.grad_x.data(), |p| f(p, &wt, &b))
        .max(compare(&wt, &grads.grad_w, |p| f(&x, p, &b)))
        .max(compare(&b, &grads.grad_b, |p| f(&x, &wt, p)))
}

pub fn deconv_error(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let g = DeconvGeometry {
        in_channels: 2,
        out_channels: 3,
        kernel: 4,
        stride: 2,
    };
    let (h, w) = (3, 4);
    let x = normals(&mut rng, 2 * h * w, 1.0);
    let wt = normals(&mut rng, g.weight_len(), 0.5);
    let (oh, ow) = g.output_dims(h, w);
    let r = normals(&mut rng, 3 * oh * ow, 1.0);
    let (gx, gw) = deconv_backward(&tensor(2, h, w, x.clone()), &wt, &g, &tensor(3, oh, ow, r.clone())).unwrap();
    let f = |x: &[f64], wt: &[f64]| dot(&deconv_forward(&tensor(2, h, w, x.to_vec()), wt, &g).unwrap(), &r);
    compare(&x, gx.data(), |p| f(p, &wt)).max(compare(&wt, &gw, |p| f(&x, p)))
}

pub fn maxpool_error(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let x = normals(&mut rng, 2 * 6 * 8, 1.0);
    let (out, arg) = maxpool_forward(&tensor(2, 6, 8, x.clone()), 2, 2).unwrap();
    let (c, oh, ow) = out.dims();
    let r = normals(&mut rng, c * oh * ow, 1.0);
    let gx = maxpool_backward((2, 6, 8), &arg, &tensor(c, oh, ow, r.clone())).unwrap();
    compare(&x, gx.data(), |p| dot(&maxpool_forward(&tensor(2, 6, 8, p.to_vec()), 2, 2).unwrap().0, &r))
}

/// Softmax followed by the masked loss, as a function of the logits, in
/// both strategies and both reduction modes.
pub fn softmax_loss_error(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let (c, h, w) = (6, 4, 5);
    let logits = normals(&mut rng, c * h * w, 2.0);
    let full: Vec<u8> = (0..h * w).map(|_| rng.below(c) as u8).collect();
    let banded: Vec<u8> = full.iter().map(|&l| if rng.uniform() < 0.3 { c as u8 } else { l }).collect();
    let mut worst: f64 = 0.0;
    for (strategy, labels) in [(Strategy::FullyBp, full), (Strategy::IgnoreBound, banded)] {
        let labels = LabelMap::new(h, w, c, labels).unwrap();
        for mode in [LossMode::Sum, LossMode::Mean] {
            let probs = softmax_forward(&tensor(c, h, w, logits.clone()));
            let out = masked_cross_entropy(&probs, &labels, strategy, mode).unwrap();
            let g = softmax_backward(&probs, &out.grad);
            let f = |p: &[f64]| {
                let probs = softmax_forward(&tensor(c, h, w, p.to_vec()));
                masked_cross_entropy(&probs, &labels, strategy, mode).unwrap().loss
            };
            worst = worst.max(compare(&logits, g.data(), f));
        }
    }
    worst
}

/// Replaces every parameter with random values so no gradient path is
/// trivially zero (fresh networks have zero prediction heads).
pub fn randomize(net: &mut Network<f64>, seed: u64) {
    let mut rng = SplitMix64::new(seed);
    for p in net.params_mut() {
        let std = match p.kind {
            ParamKind::Weight => (2.0 / p.shape[1..].iter().product::<usize>() as f64).sqrt(),
            ParamKind::Bias => 0.1,
        };
        for v in p.data.iter_mut() {
            *v = std * rng.normal();
        }
    }
}

/// Whole tiny-preset network with the masked loss on a 3x16x16 input:
/// every parameter and every input coordinate.
pub fn tiny_net_error(seed: u64) -> f64 {
    let cfg = NetworkConfig::tiny(3, 6).with_seed(seed);
    let mut net = mcseg_core::fcn::build_fcn::<f64>(&cfg).unwrap();
    randomize(&mut net, seed ^ 0x5eed);
    let mut rng = SplitMix64::new(seed.wrapping_add(1));
    let x: Vec<f64> = (0..3 * 16 * 16).map(|_| 255.0 * rng.uniform()).collect();
    let labels: Vec<u8> = (0..256).map(|_| if rng.uniform() < 0.2 { 6 } else { rng.below(6) as u8 }).collect();
    let labels = LabelMap::new(16, 16, 6, labels).unwrap();
    let loss = |net: &Network<f64>, x: &[f64]| {
        let (probs, _) = net.forward(&tensor(3, 16, 16, x.to_vec())).unwrap();
        masked_cross_entropy(&probs, &labels, Strategy::IgnoreBound, LossMode::Mean).unwrap().loss
    };
    let (probs, cache) = net.forward(&tensor(3, 16, 16, x.clone())).unwrap();
    let out = masked_cross_entropy(&probs, &labels, Strategy::IgnoreBound, LossMode::Mean).unwrap();
    let grads = net.backward(&cache, &out.grad).unwrap();

    let mut worst = compare(&x, grads.input.data(), |p| loss(&net, p));
    for i in 0..net.params().len() {
        let base = net.params()[i].data.clone();
        let mut probe = net.clone();
        let e = compare(&base, &grads.params[i], |p| {
            probe.params_mut()[i].data.copy_from_slice(p);
            loss(&probe, &x)
        });
        worst = worst.max(e);
    }
    worst
}
