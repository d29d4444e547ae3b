//! Synthetic multi-echo phantoms.
//!
//! Geometry, in coordinates normalized to the image (u across, v down):
//!
//! * background outside a body ellipse centered near (0.5, 0.5)
//! * class 1 fills the rest of the body ellipse
//! * a vertebral column band (u in ~[0.12, 0.45]) split vertically into
//!   alternating bone (5) blocks and disc (3) blocks
//! * inside each bone block, an ellipse of vertebral body fluid (2)
//! * a spinal canal band (u in ~[0.52, 0.64]) of spinal fluid (4)
//!
//! Every boundary position and radius is jittered from the seed. When fewer
//! than six classes are requested, layout class `c` is folded to
//! `c % n_classes`. Intensity of class `c` in channel `t` is
//! `A_c * exp(-TE_t / T2_c)` plus Gaussian noise.

use serde::{Deserialize, Serialize};

use super::{LabelMap, MultiChannelVolume};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    /// Signal amplitude at zero echo time.
    pub amplitude: f64,
    /// Decay constant in ms.
    pub t2_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub n_classes: usize,
    pub height: usize,
    pub width: usize,
    /// Echo times in ms, one per channel.
    pub echo_times: Vec<f64>,
    pub class_params: Vec<ClassParams>,
    pub noise_sigma: f64,
    pub seed: u64,
}

const LAYOUT_CLASSES: usize = 6;

impl PhantomSpec {
    /// 8 ms echo spacing with the first of 32 echoes dropped: TE = 16..=256 ms.
    pub fn default_echo_times() -> Vec<f64> {
        (2..=32).map(|t| 8.0 * t as f64).collect()
    }

    /// Background, CSF, vertebral body fluid, disc, spinal fluid, bone.
    ///
    /// The two fluids share a decay constant, as do body fluid and bone, so
    /// those pairs differ only in amplitude.
    pub fn default_class_params() -> Vec<ClassParams> {
        [
            (20.0, 60.0),
            (1000.0, 600.0),
            (600.0, 120.0),
            (800.0, 180.0),
            (700.0, 600.0),
            (300.0, 120.0),
        ]
        .into_iter()
        .map(|(amplitude, t2_ms)| ClassParams { amplitude, t2_ms })
        .collect()
    }

    pub fn new(height: usize, width: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            n_classes: LAYOUT_CLASSES,
            height,
            width,
            echo_times: Self::default_echo_times(),
            class_params: Self::default_class_params(),
            noise_sigma,
            seed,
        }
    }

    pub fn channels(&self) -> usize {
        self.echo_times.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.n_classes > LAYOUT_CLASSES {
            return Err(Error::Config(format!(
                "phantom layout has {LAYOUT_CLASSES} regions; {} classes would leave zero-area classes",
                self.n_classes
            )));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("phantom dims must be positive".into()));
        }
        if self.echo_times.is_empty() {
            return Err(Error::Config("at least one echo time is required".into()));
        }
        if self.echo_times[0] <= 0.0 || self.echo_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "echo times must be positive and strictly increasing".into(),
            ));
        }
        if self.class_params.len() != self.n_classes {
            return Err(Error::Config(format!(
                "{} class parameter sets for {} classes",
                self.class_params.len(),
                self.n_classes
            )));
        }
        for (c, p) in self.class_params.iter().enumerate() {
            if !(p.t2_ms > 0.0) || !(p.amplitude >= 0.0) || !p.amplitude.is_finite() {
                return Err(Error::Config(format!(
                    "class {c}: need T2 > 0 and amplitude >= 0, got {p:?}"
                )));
            }
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Config("noise_sigma must be finite and >= 0".into()));
        }
        Ok(())
    }
}

struct Layout {
    body_cx: f64,
    body_cy: f64,
    body_rx: f64,
    body_ry: f64,
    column: (f64, f64),
    canal: (f64, f64),
    /// Block edges along v inside the column; even blocks are bone.
    blocks: Vec<f64>,
    fluid_rx_frac: f64,
    fluid_ry_frac: f64,
}

impl Layout {
    fn sample(rng: &mut SplitMix64) -> Self {
        let mut j = |scale: f64| (rng.uniform() - 0.5) * 2.0 * scale;
        let body_cx = 0.5 + j(0.02);
        let body_cy = 0.5 + j(0.02);
        let body_rx = 0.46 + j(0.02);
        let body_ry = 0.47 + j(0.02);
        let col_l = 0.12 + j(0.02);
        let col_r = 0.45 + j(0.02);
        let canal_l = 0.52 + j(0.015);
        let canal_r = 0.64 + j(0.015);
        // Five bone blocks separated by four discs between v = 0.1 and 0.9.
        let n_blocks = 9;
        let mut blocks = vec![0.10 + j(0.01)];
        let span = 0.80 / n_blocks as f64;
        for b in 1..n_blocks {
            let nominal = 0.10 + span * b as f64;
            blocks.push(nominal + j(0.15 * span));
        }
        blocks.push(0.90 + j(0.01));
        let fluid_rx_frac = 0.55 + j(0.05);
        let fluid_ry_frac = 0.55 + j(0.05);
        Self {
            body_cx,
            body_cy,
            body_rx,
            body_ry,
            column: (col_l, col_r),
            canal: (canal_l, canal_r),
            blocks,
            fluid_rx_frac,
            fluid_ry_frac,
        }
    }

    fn class_at(&self, u: f64, v: f64) -> usize {
        let du = (u - self.body_cx) / self.body_rx;
        let dv = (v - self.body_cy) / self.body_ry;
        if du * du + dv * dv > 1.0 {
            return 0;
        }
        if u >= self.canal.0 && u < self.canal.1 {
            return 4;
        }
        if u >= self.column.0 && u < self.column.1 {
            for (b, pair) in self.blocks.windows(2).enumerate() {
                let (top, bottom) = (pair[0], pair[1]);
                if v >= top && v < bottom {
                    if b % 2 == 1 {
                        return 3;
                    }
                    let cu = 0.5 * (self.column.0 + self.column.1);
                    let cv = 0.5 * (top + bottom);
                    let ru = 0.5 * (self.column.1 - self.column.0) * self.fluid_rx_frac;
                    let rv = 0.5 * (bottom - top) * self.fluid_ry_frac;
                    let eu = (u - cu) / ru;
                    let ev = (v - cv) / rv;
                    return if eu * eu + ev * ev <= 1.0 { 2 } else { 5 };
                }
            }
        }
        1
    }
}

/// Generates a phantom volume and its ground-truth label map.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(MultiChannelVolume, LabelMap)> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut geo_rng = SplitMix64::new(derive_seed(spec.seed, 0));
    let layout = Layout::sample(&mut geo_rng);

    let labels: Vec<u8> = (0..h * w)
        .map(|p| {
            let (y, x) = (p / w, p % w);
            let u = (x as f64 + 0.5) / w as f64;
            let v = (y as f64 + 0.5) / h as f64;
            (layout.class_at(u, v) % spec.n_classes) as u8
        })
        .collect();

    let mut present = vec![false; spec.n_classes];
    for &l in &labels {
        present[l as usize] = true;
    }
    if let Some(missing) = present.iter().position(|&p| !p) {
        return Err(Error::Config(format!(
            "class {missing} has zero area at {h}x{w}; increase the phantom size"
        )));
    }

    // Noise-free channel profile per class.
    let profiles: Vec<Vec<f64>> = spec
        .class_params
        .iter()
        .map(|p| {
            spec.echo_times
                .iter()
                .map(|te| p.amplitude * (-te / p.t2_ms).exp())
                .collect()
        })
        .collect();

    let channels = spec.channels();
    let mut noise_rng = SplitMix64::new(derive_seed(spec.seed, 1));
    let mut data = vec![0f32; channels * h * w];
    for (t, chunk) in data.chunks_exact_mut(h * w).enumerate() {
        for (p, out) in chunk.iter_mut().enumerate() {
            let clean = profiles[labels[p] as usize][t];
            let noise = if spec.noise_sigma > 0.0 {
                spec.noise_sigma * noise_rng.normal()
            } else {
                0.0
            };
            *out = (clean + noise) as f32;
        }
    }
    let volume = MultiChannelVolume::new(channels, h, w, data)?;
    let labels = LabelMap::new(h, w, spec.n_classes, labels)?;
    Ok((volume, labels))
}
