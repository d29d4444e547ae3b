//! Masked cross-entropy, SGD with momentum, the training loop and argmax
//! prediction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcn::{volume_tensor, Network, Param, ParamKind, Scalar, Tensor};
use crate::rng::{derive_seed, SplitMix64};
use crate::volume_io::{LabelMap, MultiChannelVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Every pixel carries a real label and contributes to the loss.
    FullyBp,
    /// Pixels labeled with the ignore index contribute nothing.
    IgnoreBound,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::FullyBp => "fully-bp",
            Strategy::IgnoreBound => "ignore-bound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    Sum,
    /// Divide by the number of contributing pixels.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub iterations: u64,
    pub loss_mode: LossMode,
    pub eval_every: u64,
    pub seed: u64,
    /// Rescale the raw gradient to at most this L2 norm before the update.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::IgnoreBound,
            learning_rate: 1e-2,
            momentum: 0.9,
            weight_decay: 5e-4,
            iterations: 1000,
            loss_mode: LossMode::Mean,
            eval_every: 50,
            seed: 0,
            clip_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    /// Summed loss, lr 1e-14, momentum 0.99, weight decay 5e-4.
    pub fn classic(self) -> Self {
        Self {
            learning_rate: 1e-14,
            momentum: 0.99,
            weight_decay: 5e-4,
            loss_mode: LossMode::Sum,
            clip_norm: None,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} must lie in [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight decay {} must be >= 0", self.weight_decay)));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::Config("clip norm must be > 0".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    pub loss: f64,
    /// Gradient with respect to the post-softmax scores.
    pub grad: Tensor<T>,
    pub pixels: usize,
}

/// Per-pixel negative log-likelihood of the labeled class, summed (or
/// averaged) over contributing pixels. Ignored pixels get an exactly zero
/// gradient.
pub fn masked_cross_entropy<T: Scalar>(
    scores: &Tensor<T>,
    labels: &LabelMap,
    strategy: Strategy,
    mode: LossMode,
) -> Result<LossOutput<T>> {
    let (c, h, w) = scores.dims();
    if (h, w) != (labels.height(), labels.width()) {
        return Err(Error::Argument(format!(
            "scores are {h}x{w} but labels are {}x{}",
            labels.height(),
            labels.width()
        )));
    }
    if c != labels.n_classes() {
        return Err(Error::Argument(format!(
            "scores have {c} classes but labels declare {}",
            labels.n_classes()
        )));
    }
    let ignore = labels.ignore_index();
    let ignored = labels.count_ignored();
    if strategy == Strategy::FullyBp && ignored > 0 {
        return Err(Error::Strategy(format!(
            "fully-bp training got {ignored} pixels labeled ignore ({ignore})"
        )));
    }
    let n = h * w;
    let pixels = n - ignored;
    let scale = match mode {
        LossMode::Sum => 1.0,
        LossMode::Mean if pixels > 0 => 1.0 / pixels as f64,
        LossMode::Mean => 0.0,
    };
    let floor = T::min_positive_value();
    let data = scores.data();
    let mut grad = Tensor::zeros(c, h, w);
    let g = grad.data_mut();
    let mut loss = 0.0;
    for (p, &l) in labels.labels().iter().enumerate() {
        if l == ignore {
            continue;
        }
        let i = l as usize * n + p;
        let s = data[i].max(floor);
        loss -= s.as_f64().ln();
        g[i] = T::of(-scale) / s;
    }
    Ok(LossOutput {
        loss: loss * scale,
        grad,
        pixels,
    })
}

/// `v = momentum * v - lr * (g + wd * p)`, `p += v`. Weight decay applies
/// to weights only. Nothing is modified when any gradient is non-finite.
pub fn sgd_momentum_step<T: Scalar>(
    params: &mut [Param<T>],
    grads: &[Vec<T>],
    velocity: &mut [Vec<T>],
    cfg: &TrainConfig,
    iteration: u64,
) -> Result<()> {
    if grads.len() != params.len() || velocity.len() != params.len() {
        return Err(Error::Argument("parameter, gradient and velocity counts differ".into()));
    }
    for ((p, g), v) in params.iter().zip(grads).zip(velocity.iter()) {
        if g.len() != p.data.len() || v.len() != p.data.len() {
            return Err(Error::Argument(format!("shape mismatch for {}", p.name)));
        }
        if let Some(i) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numerics {
                iteration,
                detail: format!("non-finite gradient in {}[{i}]", p.name),
            });
        }
    }
    let lr = T::of(cfg.learning_rate);
    let mu = T::of(cfg.momentum);
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        let wd = match p.kind {
            ParamKind::Weight => T::of(cfg.weight_decay),
            ParamKind::Bias => T::zero(),
        };
        for ((x, &gi), vi) in p.data.iter_mut().zip(g).zip(v.iter_mut()) {
            *vi = mu * *vi - lr * (gi + wd * *x);
            *x = *x + *vi;
        }
    }
    if let Some(p) = params.iter().find(|p| p.data.iter().any(|x| !x.is_finite())) {
        return Err(Error::Numerics {
            iteration,
            detail: format!("parameters of {} became non-finite", p.name),
        });
    }
    Ok(())
}

/// Scales all gradients jointly so their L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients<T: Scalar>(grads: &mut [Vec<T>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flatten()
        .map(|g| g.as_f64() * g.as_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let f = T::of(max_norm / norm);
        grads.iter_mut().flatten().for_each(|g| *g = *g * f);
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: u64,
    /// Loss averaged over all training samples at this iteration.
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub train_pixels: usize,
    pub test_pixels: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainRun {
    pub history: Vec<LossReport>,
    /// Loss of the sample used at each step, before its update.
    pub step_losses: Vec<f64>,
}

/// A training run that stopped early; `partial` holds everything recorded
/// before the failure.
#[derive(Debug)]
pub struct TrainAbort {
    pub error: Error,
    pub partial: TrainRun,
}

pub type Sample = (MultiChannelVolume, LabelMap);

/// Loss of one sample under the current parameters.
pub fn sample_loss(net: &Network<f32>, sample: &Sample, strategy: Strategy, mode: LossMode) -> Result<LossOutput<f32>> {
    let (probs, _) = net.forward(&volume_tensor(&sample.0))?;
    masked_cross_entropy(&probs, &sample.1, strategy, mode)
}

fn evaluate(net: &Network<f32>, train: &[Sample], test: Option<&Sample>, cfg: &TrainConfig, iteration: u64) -> Result<LossReport> {
    let mut train_loss = 0.0;
    let mut train_pixels = 0;
    for s in train {
        let out = sample_loss(net, s, cfg.strategy, cfg.loss_mode)?;
        train_loss += out.loss;
        train_pixels += out.pixels;
    }
    let (test_loss, test_pixels) = match test {
        Some(s) => {
            let out = sample_loss(net, s, cfg.strategy, cfg.loss_mode)?;
            (Some(out.loss), out.pixels)
        }
        None => (None, 0),
    };
    let report = LossReport {
        iteration,
        train_loss: train_loss / train.len() as f64,
        test_loss,
        train_pixels,
        test_pixels,
    };
    if !report.train_loss.is_finite() || test_loss.is_some_and(|l| !l.is_finite()) {
        return Err(Error::Numerics {
            iteration,
            detail: "loss became non-finite".into(),
        });
    }
    Ok(report)
}

/// Single-sample SGD over `train` in a seeded shuffled order (reshuffled
/// every epoch). `on_step` runs after every update with the 1-based
/// iteration count, e.g. to write checkpoints.
pub fn train(
    net: &mut Network<f32>,
    train: &[Sample],
    test: Option<&Sample>,
    cfg: &TrainConfig,
    on_step: &mut dyn FnMut(u64, &Network<f32>) -> Result<()>,
) -> std::result::Result<TrainRun, TrainAbort> {
    let mut run = TrainRun::default();
    macro_rules! tryrun {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => return Err(TrainAbort { error, partial: run }),
            }
        };
    }
    tryrun!(cfg.validate());
    if train.is_empty() {
        tryrun!(Err(Error::Argument("training set is empty".into())));
    }
    let c = net.config().input_channels;
    for (v, l) in train.iter().chain(test) {
        if v.channels() != c || !l.same_dims(v) {
            tryrun!(Err(Error::Argument(format!(
                "sample {}x{}x{} with {}x{} labels does not fit a {c}-channel network",
                v.channels(),
                v.height(),
                v.width(),
                l.height(),
                l.width()
            ))));
        }
    }
    let inputs: Vec<Tensor<f32>> = train.iter().map(|(v, _)| volume_tensor(v)).collect();
    let mut velocity: Vec<Vec<f32>> = net.params().iter().map(|p| vec![0.0; p.data.len()]).collect();
    let mut rng = SplitMix64::new(derive_seed(cfg.seed, 2));
    let mut order: Vec<usize> = Vec::new();

    run.history.push(tryrun!(evaluate(net, train, test, cfg, 0)));
    for it in 0..cfg.iterations {
        let pos = (it % train.len() as u64) as usize;
        if pos == 0 {
            order = (0..train.len()).collect();
            rng.shuffle(&mut order);
        }
        let idx = order[pos];
        let (probs, cache) = tryrun!(net.forward(&inputs[idx]));
        let out = tryrun!(masked_cross_entropy(&probs, &train[idx].1, cfg.strategy, cfg.loss_mode));
        if !out.loss.is_finite() {
            tryrun!(Err(Error::Numerics {
                iteration: it + 1,
                detail: "training loss is non-finite".into(),
            }));
        }
        run.step_losses.push(out.loss);
        let mut grads = tryrun!(net.backward(&cache, &out.grad));
        if let Some(c) = cfg.clip_norm {
            clip_gradients(&mut grads.params, c);
        }
        tryrun!(sgd_momentum_step(net.params_mut(), &grads.params, &mut velocity, cfg, it + 1));
        let done = it + 1;
        if done % cfg.eval_every == 0 || done == cfg.iterations {
            run.history.push(tryrun!(evaluate(net, train, test, cfg, done)));
        }
        tryrun!(on_step(done, net));
    }
    Ok(run)
}

/// Per-pixel argmax of class scores; ties go to the lowest class index.
pub fn argmax_labels<T: Scalar>(scores: &Tensor<T>) -> LabelMap {
    let (c, h, w) = scores.dims();
    let n = h * w;
    let d = scores.data();
    let labels = (0..n)
        .map(|p| {
            let mut best = 0;
            for k in 1..c {
                if d[k * n + p] > d[best * n + p] {
                    best = k;
                }
            }
            best as u8
        })
        .collect();
    LabelMap::new(h, w, c, labels).expect("argmax stays below the class count")
}

pub fn predict<T: Scalar>(net: &Network<T>, v: &MultiChannelVolume) -> Result<LabelMap> {
    let (probs, _) = net.forward(&volume_tensor(v))?;
    Ok(argmax_labels(&probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fcn::{build_fcn, NetworkConfig};

    fn uniform(c: usize, h: usize, w: usize) -> Tensor<f64> {
        Tensor::filled(c, h, w, 1.0 / c as f64)
    }

    #[test]
    fn uniform_scores_give_ln_classes_per_pixel() {
        let labels = LabelMap::new(2, 3, 6, vec![0, 1, 2, 3, 4, 5]).unwrap();
        let out = masked_cross_entropy(&uniform(6, 2, 3), &labels, Strategy::FullyBp, LossMode::Sum).unwrap();
        assert!((out.loss - 6.0 * 6f64.ln()).abs() < 1e-12);
        assert_eq!(out.pixels, 6);
        let mean = masked_cross_entropy(&uniform(6, 2, 3), &labels, Strategy::FullyBp, LossMode::Mean).unwrap();
        assert!((mean.loss - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn all_ignored_is_zero_loss_and_gradient() {
        let labels = LabelMap::filled(2, 2, 6, 6).unwrap();
        for mode in [LossMode::Sum, LossMode::Mean] {
            let out = masked_cross_entropy(&uniform(6, 2, 2), &labels, Strategy::IgnoreBound, mode).unwrap();
            assert_eq!(out.loss, 0.0);
            assert!(out.grad.data().iter().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn single_pixel_loss() {
        let scores = Tensor::new(2, 1, 1, vec![0.1, 0.9]).unwrap();
        let labels = LabelMap::new(1, 1, 2, vec![1]).unwrap();
        let out = masked_cross_entropy(&scores, &labels, Strategy::FullyBp, LossMode::Sum).unwrap();
        assert!((out.loss - 0.10536051565782628).abs() < 1e-12);
    }

    #[test]
    fn fully_bp_refuses_ignore_labels() {
        let labels = LabelMap::new(1, 2, 6, vec![0, 6]).unwrap();
        let err = masked_cross_entropy(&uniform(6, 1, 2), &labels, Strategy::FullyBp, LossMode::Sum).unwrap_err();
        assert!(matches!(err, Error::Strategy(_)));
        let wrong = LabelMap::new(1, 2, 4, vec![0, 3]).unwrap();
        let err = masked_cross_entropy(&uniform(6, 1, 2), &wrong, Strategy::IgnoreBound, LossMode::Sum).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    fn one_param(value: f64, kind: ParamKind) -> Vec<Param<f64>> {
        vec![Param {
            name: "p".into(),
            shape: vec![1],
            kind,
            data: vec![value],
        }]
    }

    #[test]
    fn plain_gradient_descent() {
        let cfg = TrainConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut p = one_param(1.0, ParamKind::Weight);
        let mut v = vec![vec![0.0]];
        sgd_momentum_step(&mut p, &[vec![2.0]], &mut v, &cfg, 1).unwrap();
        assert_eq!(p[0].data[0], 1.0 - 0.1 * 2.0);
    }

    #[test]
    fn weight_decay_only_on_weights() {
        let cfg = TrainConfig {
            learning_rate: 1.0,
            momentum: 0.0,
            weight_decay: 0.0005,
            ..TrainConfig::default()
        };
        let mut w = one_param(2.0, ParamKind::Weight);
        let mut b = one_param(2.0, ParamKind::Bias);
        sgd_momentum_step(&mut w, &[vec![0.0]], &mut [vec![0.0]], &cfg, 1).unwrap();
        sgd_momentum_step(&mut b, &[vec![0.0]], &mut [vec![0.0]], &cfg, 1).unwrap();
        assert!((w[0].data[0] - (2.0 - 0.001)).abs() < 1e-15);
        assert_eq!(b[0].data[0], 2.0);
    }

    #[test]
    fn zero_rate_only_decays_velocity() {
        let cfg = TrainConfig {
            learning_rate: 1e-300,
            momentum: 0.5,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut p = one_param(3.0, ParamKind::Weight);
        let mut v = vec![vec![0.0]];
        sgd_momentum_step(&mut p, &[vec![1.0]], &mut v, &cfg, 1).unwrap();
        assert_eq!(p[0].data[0], 3.0);
        let mut p = one_param(3.0, ParamKind::Weight);
        let mut v = vec![vec![0.25]];
        let cfg = TrainConfig { learning_rate: 0.0, ..cfg };
        // lr = 0 is rejected by validation but the update itself is exact.
        sgd_momentum_step(&mut p, &[vec![1.0]], &mut v, &cfg, 1).unwrap();
        assert_eq!(v[0][0], 0.125);
        assert_eq!(p[0].data[0], 3.125);
    }

    #[test]
    fn non_finite_gradient_aborts_untouched() {
        let mut p = one_param(1.0, ParamKind::Weight);
        let err = sgd_momentum_step(&mut p, &[vec![f64::NAN]], &mut [vec![0.0]], &TrainConfig::default(), 17).unwrap_err();
        assert!(matches!(err, Error::Numerics { iteration: 17, .. }));
        assert_eq!(p[0].data[0], 1.0);
    }

    #[test]
    fn clipping_rescales_jointly() {
        let mut g = vec![vec![3.0f64], vec![4.0]];
        assert_eq!(clip_gradients(&mut g, 1.0), 5.0);
        assert!((g[0][0] - 0.6).abs() < 1e-15 && (g[1][0] - 0.8).abs() < 1e-15);
        let mut small = vec![vec![0.1f64]];
        clip_gradients(&mut small, 1.0);
        assert_eq!(small[0][0], 0.1);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig::default().classic().validate().is_ok());
        assert!(TrainConfig { momentum: 1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { weight_decay: -1.0, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn uniform_scores_predict_class_zero() {
        let net = build_fcn::<f32>(&NetworkConfig::tiny(2, 6)).unwrap();
        let v = MultiChannelVolume::new(2, 8, 8, vec![10.0; 128]).unwrap();
        let l = predict(&net, &v).unwrap();
        assert!(l.labels().iter().all(|&x| x == 0));
    }

    #[test]
    fn argmax_picks_maximal_class() {
        let mut s = uniform(6, 1, 2);
        s.data_mut()[3 * 2 + 1] = 0.5;
        assert_eq!(argmax_labels(&s).labels(), &[0, 3]);
    }
}
