//! The fully convolutional network.
//!
//! ```text
//! input -> (x - offset) * scale -> zero pad to a multiple of 2^stages
//!   -> [conv+relu]* pool  (per stage)  -> [conv+relu]* (top convs)
//!   -> 1x1 prediction conv on each fusion stage's output
//!   -> deepest prediction: deconv, crop, add next prediction, ... repeat
//!   -> final deconv to padded size -> center crop to input size -> softmax
//! ```
//!
//! Convolutions use "same" padding (`kernel / 2`), pools are 2x2 stride 2,
//! a deconv of stride `s` has a `2s` kernel. Every crop is centered with
//! floor offsets.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::layers::{
    bilinear_weights, center_crop, conv2d_backward, conv2d_forward, crop_at, deconv_backward,
    deconv_forward, embed_at, maxpool_backward, maxpool_forward, relu_backward, relu_forward,
    softmax_backward, softmax_forward, ConvGeometry, DeconvGeometry,
};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};
use crate::volume_io::MultiChannelVolume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopConv {
    pub width: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub preset: String,
    pub input_channels: usize,
    pub n_classes: usize,
    pub stage_widths: Vec<usize>,
    pub convs_per_stage: Vec<usize>,
    /// Convolutions after the last pool (the converted fully connected layers).
    pub top_convs: Vec<TopConv>,
    /// 1-based pool indices that receive prediction heads, ascending.
    pub fusion_stages: Vec<usize>,
    /// Deconv strides in application order, deepest first.
    pub upsample_strides: Vec<usize>,
    pub input_offset: f64,
    pub input_scale: f64,
    pub seed: u64,
}

pub const PRESETS: [&str; 3] = ["tiny", "small", "full"];

impl NetworkConfig {
    /// VGG-16 encoder (13 convs) plus two converted fully connected layers,
    /// predictions fused from pool3, pool4 and pool5.
    pub fn full(input_channels: usize, n_classes: usize) -> Self {
        Self {
            preset: "full".into(),
            input_channels,
            n_classes,
            stage_widths: vec![64, 128, 256, 512, 512],
            convs_per_stage: vec![2, 2, 3, 3, 3],
            top_convs: vec![
                TopConv { width: 4096, kernel: 7 },
                TopConv { width: 4096, kernel: 1 },
            ],
            fusion_stages: vec![3, 4, 5],
            upsample_strides: vec![2, 2, 8],
            input_offset: 127.5,
            input_scale: 1.0 / 127.5,
            seed: 0,
        }
    }

    pub fn tiny(input_channels: usize, n_classes: usize) -> Self {
        Self {
            preset: "tiny".into(),
            input_channels,
            n_classes,
            stage_widths: vec![4, 8, 16],
            convs_per_stage: vec![2, 2, 2],
            top_convs: vec![],
            fusion_stages: vec![1, 2, 3],
            upsample_strides: vec![2, 2, 2],
            input_offset: 127.5,
            input_scale: 1.0 / 127.5,
            seed: 0,
        }
    }

    pub fn small(input_channels: usize, n_classes: usize) -> Self {
        Self {
            preset: "small".into(),
            stage_widths: vec![16, 32, 64],
            ..Self::tiny(input_channels, n_classes)
        }
    }

    pub fn preset(name: &str, input_channels: usize, n_classes: usize) -> Result<Self> {
        match name {
            "tiny" => Ok(Self::tiny(input_channels, n_classes)),
            "small" => Ok(Self::small(input_channels, n_classes)),
            "full" => Ok(Self::full(input_channels, n_classes)),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}; expected one of {PRESETS:?}"
            ))),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn stages(&self) -> usize {
        self.stage_widths.len()
    }

    /// Feature-learning convolutions (encoder plus top), excluding prediction heads.
    pub fn encoder_conv_count(&self) -> usize {
        self.convs_per_stage.iter().sum::<usize>() + self.top_convs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.stages();
        if self.input_channels == 0 || self.n_classes == 0 {
            return Err(Error::Config("input channels and classes must be >= 1".into()));
        }
        if s == 0 || self.convs_per_stage.len() != s {
            return Err(Error::Config(format!(
                "{} stage widths but {} conv counts",
                s,
                self.convs_per_stage.len()
            )));
        }
        if self.stage_widths.iter().any(|&w| w == 0) || self.convs_per_stage.iter().any(|&c| c == 0) {
            return Err(Error::Config("stage widths and conv counts must be >= 1".into()));
        }
        if self.top_convs.iter().any(|t| t.width == 0 || t.kernel == 0 || t.kernel % 2 == 0) {
            return Err(Error::Config("top convs need width >= 1 and an odd kernel".into()));
        }
        let f = &self.fusion_stages;
        if f.is_empty() || f[0] == 0 || f.windows(2).any(|p| p[1] <= p[0]) || *f.last().unwrap() != s {
            return Err(Error::Config(format!(
                "fusion stages {f:?} must be ascending pool indices ending at pool{s}"
            )));
        }
        if f.len() == 3 && s < 3 {
            return Err(Error::Config("three-way fusion needs at least 3 stages".into()));
        }
        let mut expected: Vec<usize> = f.windows(2).rev().map(|p| 1 << (p[1] - p[0])).collect();
        expected.push(1 << f[0]);
        if self.upsample_strides != expected {
            return Err(Error::Config(format!(
                "upsample strides {:?} do not match fusion stages {f:?} (expected {expected:?})",
                self.upsample_strides
            )));
        }
        if !self.input_scale.is_finite() || self.input_scale == 0.0 || !self.input_offset.is_finite() {
            return Err(Error::Config("input scale must be finite and non-zero".into()));
        }
        Ok(())
    }

    /// Rejects inputs whose unpadded extent cannot fill a pool window at
    /// some stage.
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        for stage in 1..=self.stages() {
            let div = 1usize << (stage - 1);
            if h / div < 2 || w / div < 2 {
                return Err(Error::Config(format!(
                    "input {h}x{w} is too small for stage {stage} (pool{stage} sees {}x{})",
                    h / div,
                    w / div
                )));
            }
        }
        Ok(())
    }

    /// Output dims for an `h x w` input, traced through every crop
    /// without allocating the network.
    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        self.check_input(h, w)?;
        let (_, _, hp, wp) = self.padding(h, w);
        let f = &self.fusion_stages;
        let n = f.len();
        let mut cur = (hp >> f[n - 1], wp >> f[n - 1]);
        for (j, &stride) in self.upsample_strides.iter().enumerate() {
            let up = ((cur.0 - 1) * stride + 2 * stride, (cur.1 - 1) * stride + 2 * stride);
            let target = if j + 1 < n {
                (hp >> f[n - 2 - j], wp >> f[n - 2 - j])
            } else {
                (hp, wp)
            };
            if up.0 < target.0 || up.1 < target.1 {
                return Err(Error::Config(format!(
                    "upsampling step {} yields {}x{}, short of {}x{}",
                    j + 1,
                    up.0,
                    up.1,
                    target.0,
                    target.1
                )));
            }
            cur = target;
        }
        Ok((self.n_classes, h, w))
    }

    /// `(pad_top, pad_left, padded_h, padded_w)`.
    pub fn padding(&self, h: usize, w: usize) -> (usize, usize, usize, usize) {
        let m = 1usize << self.stages();
        let hp = h.div_ceil(m) * m;
        let wp = w.div_ceil(m) * m;
        ((hp - h) / 2, (wp - w) / 2, hp, wp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
    pub data: Vec<T>,
}

/// One entry of the layer listing written to checkpoint manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Pad { multiple: usize },
    Conv { name: String, in_channels: usize, out_channels: usize, kernel: usize, pad: usize },
    Relu,
    Maxpool { name: String, size: usize, stride: usize },
    Predict { name: String, source: String, in_channels: usize, out_channels: usize },
    Deconv { name: String, channels: usize, kernel: usize, stride: usize },
    Crop { target: String },
    Add { inputs: [String; 2] },
    Softmax,
}

#[derive(Debug, Clone, Copy)]
struct ConvSlot {
    geom: ConvGeometry,
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy)]
struct DeconvSlot {
    geom: DeconvGeometry,
    weight: usize,
}

static STAMPS: AtomicU64 = AtomicU64::new(1);

fn next_stamp() -> u64 {
    STAMPS.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    config: NetworkConfig,
    params: Vec<Param<T>>,
    layers: Vec<LayerSpec>,
    encoder: Vec<Vec<ConvSlot>>,
    top: Vec<ConvSlot>,
    heads: Vec<ConvSlot>,
    deconvs: Vec<DeconvSlot>,
    stamp: u64,
}

/// Activations retained by [`Network::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    stamp: u64,
    input_dims: (usize, usize, usize),
    pad: (usize, usize),
    padded_input: Tensor<T>,
    enc_outputs: Vec<Vec<Tensor<T>>>,
    pools: Vec<(Tensor<T>, Vec<usize>, (usize, usize, usize))>,
    top_outputs: Vec<Tensor<T>>,
    deconv_inputs: Vec<Tensor<T>>,
    deconv_crops: Vec<((usize, usize), (usize, usize))>,
    probs: Tensor<T>,
}

impl<T> ForwardCache<T> {
    pub fn probs(&self) -> &Tensor<T> {
        &self.probs
    }
}

/// Gradients aligned with [`Network::params`], plus the input gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub params: Vec<Vec<T>>,
    pub input: Tensor<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn is_finite(&self) -> bool {
        self.params.iter().flatten().all(|v| v.is_finite())
    }

    pub fn all_zero(&self) -> bool {
        self.params.iter().flatten().all(|v| *v == T::zero())
    }
}

/// Builds a network with seeded initial weights: He-normal encoder convs,
/// zero biases, zero prediction heads and bilinear deconvs.
pub fn build_fcn<T: Scalar>(cfg: &NetworkConfig) -> Result<Network<T>> {
    let mut net = Network::skeleton(cfg)?;
    let mut rng = SplitMix64::new(derive_seed(cfg.seed, 0x1417));
    let heads: Vec<usize> = net.heads.iter().flat_map(|h| [h.weight, h.bias]).collect();
    let deconvs: Vec<(usize, DeconvGeometry)> = net.deconvs.iter().map(|d| (d.weight, d.geom)).collect();
    for (i, p) in net.params.iter_mut().enumerate() {
        if p.kind == ParamKind::Bias || heads.contains(&i) {
            continue;
        }
        if let Some((_, g)) = deconvs.iter().find(|(w, _)| *w == i) {
            p.data = bilinear_weights(g.out_channels, g.kernel)
                .into_iter()
                .map(T::of)
                .collect();
            continue;
        }
        let fan_in: usize = p.shape[1..].iter().product();
        let std = (2.0 / fan_in as f64).sqrt();
        for v in p.data.iter_mut() {
            *v = T::of(std * rng.normal());
        }
    }
    Ok(net)
}

impl<T: Scalar> Network<T> {
    /// Allocates the layer structure with all parameters zero.
    pub fn skeleton(cfg: &NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let mut params: Vec<Param<T>> = Vec::new();
        let mut layers = vec![LayerSpec::Pad {
            multiple: 1 << cfg.stages(),
        }];
        let add_conv = |params: &mut Vec<Param<T>>, layers: &mut Vec<LayerSpec>, name: String, geom: ConvGeometry| {
            let weight = params.len();
            params.push(Param {
                name: format!("{name}.weight"),
                shape: vec![geom.out_channels, geom.in_channels, geom.kernel_h, geom.kernel_w],
                kind: ParamKind::Weight,
                data: vec![T::zero(); geom.weight_len()],
            });
            params.push(Param {
                name: format!("{name}.bias"),
                shape: vec![geom.out_channels],
                kind: ParamKind::Bias,
                data: vec![T::zero(); geom.out_channels],
            });
            layers.push(LayerSpec::Conv {
                name,
                in_channels: geom.in_channels,
                out_channels: geom.out_channels,
                kernel: geom.kernel_h,
                pad: geom.pad,
            });
            ConvSlot {
                geom,
                weight,
                bias: weight + 1,
            }
        };

        let mut channels = cfg.input_channels;
        let mut encoder = Vec::new();
        let mut stage_out = Vec::new();
        for (s, (&width, &n)) in cfg.stage_widths.iter().zip(&cfg.convs_per_stage).enumerate() {
            let mut convs = Vec::new();
            for i in 0..n {
                let geom = ConvGeometry::square(width, channels, 3, 1, 1);
                convs.push(add_conv(&mut params, &mut layers, format!("conv{}_{}", s + 1, i + 1), geom));
                layers.push(LayerSpec::Relu);
                channels = width;
            }
            layers.push(LayerSpec::Maxpool {
                name: format!("pool{}", s + 1),
                size: 2,
                stride: 2,
            });
            encoder.push(convs);
            stage_out.push((format!("pool{}", s + 1), channels));
        }
        let mut top = Vec::new();
        for (j, t) in cfg.top_convs.iter().enumerate() {
            let geom = ConvGeometry::square(t.width, channels, t.kernel, 1, t.kernel / 2);
            top.push(add_conv(&mut params, &mut layers, format!("fc{}", cfg.stages() + 1 + j), geom));
            layers.push(LayerSpec::Relu);
            channels = t.width;
        }
        if !cfg.top_convs.is_empty() {
            stage_out.last_mut().unwrap().0 = format!("fc{}", cfg.stages() + cfg.top_convs.len());
            stage_out.last_mut().unwrap().1 = channels;
        }

        let mut heads = Vec::new();
        for &f in &cfg.fusion_stages {
            let (source, c_in) = stage_out[f - 1].clone();
            let geom = ConvGeometry::square(cfg.n_classes, c_in, 1, 1, 0);
            let name = format!("score_pool{f}");
            let slot = add_conv(&mut params, &mut layers, name.clone(), geom);
            layers.pop();
            layers.push(LayerSpec::Predict {
                name,
                source,
                in_channels: c_in,
                out_channels: cfg.n_classes,
            });
            heads.push(slot);
        }

        let mut deconvs = Vec::new();
        let n = cfg.fusion_stages.len();
        for (j, &stride) in cfg.upsample_strides.iter().enumerate() {
            let geom = DeconvGeometry {
                in_channels: cfg.n_classes,
                out_channels: cfg.n_classes,
                kernel: 2 * stride,
                stride,
            };
            let name = format!("upscore{}", j + 1);
            let weight = params.len();
            params.push(Param {
                name: format!("{name}.weight"),
                shape: vec![geom.in_channels, geom.out_channels, geom.kernel, geom.kernel],
                kind: ParamKind::Weight,
                data: vec![T::zero(); geom.weight_len()],
            });
            layers.push(LayerSpec::Deconv {
                name: name.clone(),
                channels: cfg.n_classes,
                kernel: geom.kernel,
                stride,
            });
            if j + 1 < n {
                let target = format!("score_pool{}", cfg.fusion_stages[n - 2 - j]);
                layers.push(LayerSpec::Crop { target: target.clone() });
                layers.push(LayerSpec::Add {
                    inputs: [name, target],
                });
            } else {
                layers.push(LayerSpec::Crop {
                    target: "input".into(),
                });
            }
            deconvs.push(DeconvSlot { geom, weight });
        }
        layers.push(LayerSpec::Softmax);

        Ok(Self {
            config: cfg.clone(),
            params,
            layers,
            encoder,
            top,
            heads,
            deconvs,
            stamp: next_stamp(),
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        self.stamp = next_stamp();
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Number of feature-learning conv layers (prediction heads excluded).
    pub fn conv_layer_count(&self) -> usize {
        self.encoder.iter().map(Vec::len).sum::<usize>() + self.top.len()
    }

    pub fn zero_gradients(&self, input_dims: (usize, usize, usize)) -> Gradients<T> {
        Gradients {
            params: self.params.iter().map(|p| vec![T::zero(); p.data.len()]).collect(),
            input: Tensor::zeros(input_dims.0, input_dims.1, input_dims.2),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    kind: p.kind,
                    data: p.data.iter().map(|v| U::of(v.as_f64())).collect(),
                })
                .collect(),
            layers: self.layers.clone(),
            encoder: self.encoder.clone(),
            top: self.top.clone(),
            heads: self.heads.clone(),
            deconvs: self.deconvs.clone(),
            stamp: next_stamp(),
        }
    }

    /// Output dims for an `h x w` input, by shape propagation alone.
    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize, usize)> {
        self.config.output_dims(h, w)
    }

    fn param(&self, i: usize) -> &[T] {
        &self.params[i].data
    }

    fn conv(&self, slot: &ConvSlot, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_forward(x, self.param(slot.weight), self.param(slot.bias), &slot.geom)
    }

    /// Per-pixel class probabilities (`n_classes x H x W`) and the cache
    /// needed by [`backward`](Self::backward).
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        let cfg = &self.config;
        let (c, h, w) = x.dims();
        if c != cfg.input_channels {
            return Err(Error::Argument(format!(
                "network expects {} input channels, got {c}",
                cfg.input_channels
            )));
        }
        cfg.check_input(h, w)?;
        let (top_pad, left_pad, hp, wp) = cfg.padding(h, w);
        let offset = T::of(cfg.input_offset);
        let scale = T::of(cfg.input_scale);
        let mut scaled = x.clone();
        scaled.data_mut().iter_mut().for_each(|v| *v = (*v - offset) * scale);
        let padded_input = embed_at(&scaled, hp, wp, top_pad, left_pad);

        let mut enc_outputs = Vec::with_capacity(self.encoder.len());
        let mut pools = Vec::with_capacity(self.encoder.len());
        let mut cur = padded_input.clone();
        for stage in &self.encoder {
            let mut outs = Vec::with_capacity(stage.len());
            for slot in stage {
                let mut y = self.conv(slot, &cur)?;
                relu_forward(&mut y);
                outs.push(y.clone());
                cur = y;
            }
            let in_dims = cur.dims();
            let (pooled, arg) = maxpool_forward(&cur, 2, 2)?;
            pools.push((pooled.clone(), arg, in_dims));
            enc_outputs.push(outs);
            cur = pooled;
        }
        let mut top_outputs = Vec::with_capacity(self.top.len());
        for slot in &self.top {
            let mut y = self.conv(slot, &cur)?;
            relu_forward(&mut y);
            top_outputs.push(y.clone());
            cur = y;
        }

        let scores: Vec<Tensor<T>> = self
            .heads
            .iter()
            .zip(&cfg.fusion_stages)
            .map(|(slot, &f)| self.conv(slot, self.head_input(f, &pools, &top_outputs)))
            .collect::<Result<_>>()?;

        let n = scores.len();
        let mut fused = scores[n - 1].clone();
        let mut deconv_inputs = Vec::with_capacity(n);
        let mut deconv_crops = Vec::with_capacity(n);
        for (j, d) in self.deconvs.iter().enumerate() {
            let up = deconv_forward(&fused, self.param(d.weight), &d.geom)?;
            let raw = (up.height(), up.width());
            deconv_inputs.push(fused);
            if j + 1 < n {
                let target = &scores[n - 2 - j];
                let (mut cropped, off) = center_crop(&up, target.height(), target.width())?;
                cropped.add_assign(target);
                deconv_crops.push((raw, off));
                fused = cropped;
            } else {
                // Two centered crops: deconv output -> padded size -> input size.
                let (_, off1) = center_crop(&up, hp, wp)?;
                let off = (off1.0 + top_pad, off1.1 + left_pad);
                fused = crop_at(&up, off.0, off.1, h, w);
                deconv_crops.push((raw, off));
            }
        }
        let probs = softmax_forward(&fused);
        let cache = ForwardCache {
            stamp: self.stamp,
            input_dims: (c, h, w),
            pad: (top_pad, left_pad),
            padded_input,
            enc_outputs,
            pools,
            top_outputs,
            deconv_inputs,
            deconv_crops,
            probs: probs.clone(),
        };
        Ok((probs, cache))
    }

    fn head_input<'a>(
        &self,
        f: usize,
        pools: &'a [(Tensor<T>, Vec<usize>, (usize, usize, usize))],
        top_outputs: &'a [Tensor<T>],
    ) -> &'a Tensor<T> {
        if f == self.config.stages() && !top_outputs.is_empty() {
            top_outputs.last().unwrap()
        } else {
            &pools[f - 1].0
        }
    }

    /// Exact gradients of `sum(grad_scores * probs)` with respect to every
    /// parameter and the input.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_scores: &Tensor<T>) -> Result<Gradients<T>> {
        if cache.stamp != self.stamp {
            return Err(Error::State(
                "forward cache was produced by different parameters".into(),
            ));
        }
        if grad_scores.dims() != cache.probs.dims() {
            return Err(Error::Argument(format!(
                "score gradient dims {:?} differ from output dims {:?}",
                grad_scores.dims(),
                cache.probs.dims()
            )));
        }
        let cfg = &self.config;
        let mut grads = self.zero_gradients(cache.input_dims);
        let n = self.heads.len();

        // Softmax, then the deconv/crop/add chain in reverse. Each sum
        // `fused = crop(deconv_j(cur)) + head[n-2-j]` passes its gradient
        // unchanged to the head.
        let mut head_grads: Vec<Option<Tensor<T>>> = vec![None; n];
        let mut g = softmax_backward(&cache.probs, grad_scores);
        for j in (0..n).rev() {
            let d = &self.deconvs[j];
            let ((rh, rw), (oy, ox)) = cache.deconv_crops[j];
            if j + 1 < n {
                head_grads[n - 2 - j] = Some(g.clone());
            }
            let up_grad = embed_at(&g, rh, rw, oy, ox);
            let (gx, gw) = deconv_backward(&cache.deconv_inputs[j], self.param(d.weight), &d.geom, &up_grad)?;
            accumulate(&mut grads.params[d.weight], &gw);
            g = gx;
        }
        // What remains is the gradient of the deepest prediction.
        head_grads[n - 1] = Some(g);

        // Prediction heads feed gradients back into their sources.
        let stages = cfg.stages();
        let mut pool_grads: Vec<Option<Tensor<T>>> = vec![None; stages];
        let mut top_grad: Option<Tensor<T>> = None;
        for (i, (&f, slot)) in cfg.fusion_stages.iter().zip(&self.heads).enumerate() {
            let g_head = head_grads[i].take().expect("every head receives a gradient");
            let input = self.head_input(f, &cache.pools, &cache.top_outputs);
            let cg = conv2d_backward(input, self.param(slot.weight), &slot.geom, &g_head)?;
            accumulate(&mut grads.params[slot.weight], &cg.grad_w);
            accumulate(&mut grads.params[slot.bias], &cg.grad_b);
            let target = if f == stages && !cache.top_outputs.is_empty() {
                &mut top_grad
            } else {
                &mut pool_grads[f - 1]
            };
            add_into(target, cg.grad_x);
        }

        if !self.top.is_empty() {
            let mut g = top_grad.unwrap_or_else(|| {
                let (c, h, w) = cache.top_outputs.last().unwrap().dims();
                Tensor::zeros(c, h, w)
            });
            for j in (0..self.top.len()).rev() {
                relu_backward(&cache.top_outputs[j], &mut g);
                let input = if j == 0 {
                    &cache.pools[stages - 1].0
                } else {
                    &cache.top_outputs[j - 1]
                };
                let slot = &self.top[j];
                let cg = conv2d_backward(input, self.param(slot.weight), &slot.geom, &g)?;
                accumulate(&mut grads.params[slot.weight], &cg.grad_w);
                accumulate(&mut grads.params[slot.bias], &cg.grad_b);
                g = cg.grad_x;
            }
            add_into(&mut pool_grads[stages - 1], g);
        }

        let mut g_input = Tensor::zeros(0, 0, 0);
        for s in (0..stages).rev() {
            let (pooled, arg, in_dims) = &cache.pools[s];
            let g_pool = pool_grads[s].take().unwrap_or_else(|| {
                let (c, h, w) = pooled.dims();
                Tensor::zeros(c, h, w)
            });
            let mut g = maxpool_backward(*in_dims, arg, &g_pool)?;
            for i in (0..self.encoder[s].len()).rev() {
                relu_backward(&cache.enc_outputs[s][i], &mut g);
                let input = if i > 0 {
                    &cache.enc_outputs[s][i - 1]
                } else if s > 0 {
                    &cache.pools[s - 1].0
                } else {
                    &cache.padded_input
                };
                let slot = &self.encoder[s][i];
                let cg = conv2d_backward(input, self.param(slot.weight), &slot.geom, &g)?;
                accumulate(&mut grads.params[slot.weight], &cg.grad_w);
                accumulate(&mut grads.params[slot.bias], &cg.grad_b);
                g = cg.grad_x;
            }
            if s > 0 {
                add_into(&mut pool_grads[s - 1], g);
            } else {
                g_input = g;
            }
        }
        let (_, h, w) = cache.input_dims;
        let mut gi = crop_at(&g_input, cache.pad.0, cache.pad.1, h, w);
        let scale = T::of(cfg.input_scale);
        gi.data_mut().iter_mut().for_each(|v| *v = *v * scale);
        grads.input = gi;
        Ok(grads)
    }
}

fn accumulate<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = *d + *s;
    }
}

fn add_into<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(t) => t.add_assign(&g),
        None => *slot = Some(g),
    }
}

/// Converts a volume into a network input tensor.
pub fn volume_tensor<T: Scalar>(v: &MultiChannelVolume) -> Tensor<T> {
    Tensor::new(
        v.channels(),
        v.height(),
        v.width(),
        v.data().iter().map(|&x| T::of(x as f64)).collect(),
    )
    .expect("volume dims are consistent")
}
