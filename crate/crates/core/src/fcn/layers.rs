//! Layer kernels with hand-written backward passes.
//!
//! Convolutions are lowered to GEMM through `im2col`; a transposed
//! convolution is the adjoint lowering (`col2im` of `W^T x`).

use super::tensor::{matmul, Scalar, Tensor};
use crate::error::{Error, Result};

/// Weights are laid out `[out_channels, in_channels, kernel_h, kernel_w]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn square(out_channels: usize, in_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            pad,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        if self.stride == 0 {
            return None;
        }
        let ph = h + 2 * self.pad;
        let pw = w + 2 * self.pad;
        if ph < self.kernel_h || pw < self.kernel_w {
            return None;
        }
        Some((
            (ph - self.kernel_h) / self.stride + 1,
            (pw - self.kernel_w) / self.stride + 1,
        ))
    }

    fn check(&self, x: (usize, usize, usize), weights: usize) -> Result<(usize, usize)> {
        if x.0 != self.in_channels {
            return Err(Error::Argument(format!(
                "conv expects {} input channels, got {}",
                self.in_channels, x.0
            )));
        }
        if weights != self.weight_len() {
            return Err(Error::Argument(format!(
                "conv expects {} weights, got {weights}",
                self.weight_len()
            )));
        }
        self.output_dims(x.1, x.2).ok_or_else(|| {
            Error::Argument(format!(
                "kernel {}x{} (stride {}, pad {}) does not fit {}x{}",
                self.kernel_h, self.kernel_w, self.stride, self.pad, x.1, x.2
            ))
        })
    }
}

/// Unfolds `x` into a `(c*kh*kw) x (oh*ow)` patch matrix.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    x: &Tensor<T>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let (c, h, w) = x.dims();
    let src = x.data();
    let mut cols = vec![T::zero(); c * kh * kw * oh * ow];
    for ch in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ch * kh + ky) * kw + kx) * oh * ow;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = &src[(ch * h + iy as usize) * w..(ch * h + iy as usize + 1) * w];
                    let dst = &mut cols[row + oy * ow..row + (oy + 1) * ow];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            *d = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch columns back, summing overlaps.
#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Tensor<T> {
    let mut out = Tensor::zeros(c, h, w);
    let dst = out.data_mut();
    for ch in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ch * kh + ky) * kw + kx) * oh * ow;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = (ch * h + iy as usize) * w;
                    let src = &cols[row + oy * ow..row + (oy + 1) * ow];
                    for (ox, &v) in src.iter().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            let d = &mut dst[base + ix as usize];
                            *d = *d + v;
                        }
                    }
                }
            }
        }
    }
    out
}

fn is_pointwise(g: &ConvGeometry) -> bool {
    g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.pad == 0
}

/// Cross-correlation with stride and zero padding.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    weights: &[T],
    bias: &[T],
    g: &ConvGeometry,
) -> Result<Tensor<T>> {
    let (oh, ow) = g.check(x.dims(), weights.len())?;
    if bias.len() != g.out_channels {
        return Err(Error::Argument(format!(
            "conv expects {} biases, got {}",
            g.out_channels,
            bias.len()
        )));
    }
    let k = g.in_channels * g.kernel_h * g.kernel_w;
    let p = oh * ow;
    let mut out = vec![T::zero(); g.out_channels * p];
    for (o, &b) in bias.iter().enumerate() {
        out[o * p..(o + 1) * p].iter_mut().for_each(|v| *v = b);
    }
    if is_pointwise(g) {
        matmul(g.out_channels, k, p, weights, false, x.data(), false, &mut out, true);
    } else {
        let cols = im2col(x, g.kernel_h, g.kernel_w, g.stride, g.pad, oh, ow);
        matmul(g.out_channels, k, p, weights, false, &cols, false, &mut out, true);
    }
    Tensor::new(g.out_channels, oh, ow, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub grad_x: Tensor<T>,
    pub grad_w: Vec<T>,
    pub grad_b: Vec<T>,
}

pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weights: &[T],
    g: &ConvGeometry,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let (oh, ow) = g.check(x.dims(), weights.len())?;
    if grad_out.dims() != (g.out_channels, oh, ow) {
        return Err(Error::Argument(format!(
            "conv grad_out has dims {:?}, forward produced {:?}",
            grad_out.dims(),
            (g.out_channels, oh, ow)
        )));
    }
    let k = g.in_channels * g.kernel_h * g.kernel_w;
    let p = oh * ow;
    let go = grad_out.data();
    let grad_b: Vec<T> = (0..g.out_channels)
        .map(|o| go[o * p..(o + 1) * p].iter().copied().sum())
        .collect();
    let mut grad_w = vec![T::zero(); g.out_channels * k];
    let (_, h, w) = x.dims();
    let grad_x = if is_pointwise(g) {
        matmul(g.out_channels, p, k, go, false, x.data(), true, &mut grad_w, false);
        let mut gx = vec![T::zero(); k * p];
        matmul(k, g.out_channels, p, weights, true, go, false, &mut gx, false);
        Tensor::new(g.in_channels, h, w, gx)?
    } else {
        let cols = im2col(x, g.kernel_h, g.kernel_w, g.stride, g.pad, oh, ow);
        matmul(g.out_channels, p, k, go, false, &cols, true, &mut grad_w, false);
        let mut gcols = vec![T::zero(); k * p];
        matmul(k, g.out_channels, p, weights, true, go, false, &mut gcols, false);
        col2im(&gcols, g.in_channels, h, w, g.kernel_h, g.kernel_w, g.stride, g.pad, oh, ow)
    };
    Ok(ConvGrads {
        grad_x,
        grad_w,
        grad_b,
    })
}

/// Weights are laid out `[in_channels, out_channels, kernel, kernel]`; no
/// padding, so the output is `((h-1)*stride + kernel)` on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeconvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl DeconvGeometry {
    pub fn weight_len(&self) -> usize {
        self.in_channels * self.out_channels * self.kernel * self.kernel
    }

    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h - 1) * self.stride + self.kernel,
            (w - 1) * self.stride + self.kernel,
        )
    }

    fn check(&self, x: (usize, usize, usize), weights: usize) -> Result<(usize, usize)> {
        if self.stride == 0 || self.kernel == 0 {
            return Err(Error::Argument("deconv stride and kernel must be >= 1".into()));
        }
        if x.0 != self.in_channels || weights != self.weight_len() {
            return Err(Error::Argument(format!(
                "deconv expects {} input channels and {} weights, got {} and {weights}",
                self.in_channels,
                self.weight_len(),
                x.0
            )));
        }
        Ok(self.output_dims(x.1, x.2))
    }
}

/// Transposed convolution.
pub fn deconv_forward<T: Scalar>(x: &Tensor<T>, weights: &[T], g: &DeconvGeometry) -> Result<Tensor<T>> {
    let (oh, ow) = g.check(x.dims(), weights.len())?;
    let (_, h, w) = x.dims();
    let rows = g.out_channels * g.kernel * g.kernel;
    let mut cols = vec![T::zero(); rows * h * w];
    matmul(rows, g.in_channels, h * w, weights, true, x.data(), false, &mut cols, false);
    Ok(col2im(&cols, g.out_channels, oh, ow, g.kernel, g.kernel, g.stride, 0, h, w))
}

/// Returns `(grad_x, grad_w)`.
pub fn deconv_backward<T: Scalar>(
    x: &Tensor<T>,
    weights: &[T],
    g: &DeconvGeometry,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>)> {
    let (oh, ow) = g.check(x.dims(), weights.len())?;
    if grad_out.dims() != (g.out_channels, oh, ow) {
        return Err(Error::Argument(format!(
            "deconv grad_out has dims {:?}, forward produced {:?}",
            grad_out.dims(),
            (g.out_channels, oh, ow)
        )));
    }
    let (_, h, w) = x.dims();
    let rows = g.out_channels * g.kernel * g.kernel;
    let gcols = im2col(grad_out, g.kernel, g.kernel, g.stride, 0, h, w);
    let mut gx = vec![T::zero(); g.in_channels * h * w];
    matmul(g.in_channels, rows, h * w, weights, false, &gcols, false, &mut gx, false);
    let mut gw = vec![T::zero(); g.in_channels * rows];
    matmul(g.in_channels, h * w, rows, x.data(), false, &gcols, true, &mut gw, false);
    Ok((Tensor::new(g.in_channels, h, w, gx)?, gw))
}

/// Separable bilinear interpolation kernel of side `size`, row-major.
pub fn bilinear_kernel(size: usize) -> Vec<f64> {
    let factor = (size + 1) / 2;
    let center = if size % 2 == 1 {
        factor as f64 - 1.0
    } else {
        factor as f64 - 0.5
    };
    let f = factor as f64;
    let profile: Vec<f64> = (0..size)
        .map(|i| 1.0 - (i as f64 - center).abs() / f)
        .collect();
    profile
        .iter()
        .flat_map(|a| profile.iter().map(move |b| a * b))
        .collect()
}

/// Deconv weights that upsample each channel independently.
pub fn bilinear_weights(channels: usize, size: usize) -> Vec<f64> {
    let k = bilinear_kernel(size);
    let kk = size * size;
    let mut w = vec![0.0; channels * channels * kk];
    for c in 0..channels {
        let off = (c * channels + c) * kk;
        w[off..off + kk].copy_from_slice(&k);
    }
    w
}

/// 2D max pooling; also returns the flat input index of each maximum.
/// Ties go to the first element in row-major window order.
pub fn maxpool_forward<T: Scalar>(x: &Tensor<T>, size: usize, stride: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let (c, h, w) = x.dims();
    if size == 0 || stride == 0 || h < size || w < size {
        return Err(Error::Argument(format!(
            "pool window {size} (stride {stride}) does not fit {h}x{w}"
        )));
    }
    let oh = (h - size) / stride + 1;
    let ow = (w - size) / stride + 1;
    let src = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (ch * h + oy * stride) * w + ox * stride;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = (ch * h + oy * stride + dy) * w + ox * stride + dx;
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                }
                out.push(src[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::new(c, oh, ow, out)?, arg))
}

pub fn maxpool_backward<T: Scalar>(input_dims: (usize, usize, usize), argmax: &[usize], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if argmax.len() != grad_out.data().len() {
        return Err(Error::Argument("pool argmax does not match grad_out".into()));
    }
    let (c, h, w) = input_dims;
    let mut gx = Tensor::zeros(c, h, w);
    let dst = gx.data_mut();
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        dst[i] = dst[i] + g;
    }
    Ok(gx)
}

pub fn relu_forward<T: Scalar>(x: &mut Tensor<T>) {
    x.data_mut().iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero();
        }
    });
}

/// Gradient through ReLU given its output.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad: &mut Tensor<T>) {
    for (g, &o) in grad.data_mut().iter_mut().zip(output.data()) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Softmax over the channel axis at every pixel.
pub fn softmax_forward<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = logits.dims();
    let n = h * w;
    let src = logits.data();
    let mut out = vec![T::zero(); c * n];
    for p in 0..n {
        let mut m = T::neg_infinity();
        for ch in 0..c {
            m = m.max(src[ch * n + p]);
        }
        let mut sum = T::zero();
        for ch in 0..c {
            let e = (src[ch * n + p] - m).exp();
            out[ch * n + p] = e;
            sum = sum + e;
        }
        for ch in 0..c {
            out[ch * n + p] = out[ch * n + p] / sum;
        }
    }
    Tensor::new(c, h, w, out).expect("same dims")
}

/// `dz = p * (g - sum_c p_c g_c)` per pixel.
pub fn softmax_backward<T: Scalar>(probs: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = probs.dims();
    let n = h * w;
    let (p, g) = (probs.data(), grad.data());
    let mut out = vec![T::zero(); c * n];
    for px in 0..n {
        let mut dotp = T::zero();
        for ch in 0..c {
            dotp = dotp + p[ch * n + px] * g[ch * n + px];
        }
        for ch in 0..c {
            let i = ch * n + px;
            out[i] = p[i] * (g[i] - dotp);
        }
    }
    Tensor::new(c, h, w, out).expect("same dims")
}

/// Crops a `th x tw` window centered with floor offsets.
pub fn center_crop<T: Scalar>(x: &Tensor<T>, th: usize, tw: usize) -> Result<(Tensor<T>, (usize, usize))> {
    let (_, h, w) = x.dims();
    if th > h || tw > w {
        return Err(Error::Argument(format!("cannot crop {h}x{w} to {th}x{tw}")));
    }
    let (oy, ox) = ((h - th) / 2, (w - tw) / 2);
    Ok((crop_at(x, oy, ox, th, tw), (oy, ox)))
}

pub fn crop_at<T: Scalar>(x: &Tensor<T>, oy: usize, ox: usize, th: usize, tw: usize) -> Tensor<T> {
    let (c, _, w) = x.dims();
    let h = x.height();
    let src = x.data();
    let mut out = Vec::with_capacity(c * th * tw);
    for ch in 0..c {
        for y in 0..th {
            let base = (ch * h + oy + y) * w + ox;
            out.extend_from_slice(&src[base..base + tw]);
        }
    }
    Tensor::new(c, th, tw, out).expect("crop dims")
}

/// Zero-embeds `x` at `(oy, ox)` inside an `h x w` canvas; the adjoint of
/// [`crop_at`].
pub fn embed_at<T: Scalar>(x: &Tensor<T>, h: usize, w: usize, oy: usize, ox: usize) -> Tensor<T> {
    let (c, th, tw) = x.dims();
    let mut out = Tensor::zeros(c, h, w);
    let dst = out.data_mut();
    let src = x.data();
    for ch in 0..c {
        for y in 0..th {
            let d = (ch * h + oy + y) * w + ox;
            dst[d..d + tw].copy_from_slice(&src[(ch * th + y) * tw..(ch * th + y + 1) * tw]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(c: usize, h: usize, w: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::new(c, h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel() {
        let x = t(1, 2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let g = ConvGeometry::square(1, 1, 1, 1, 0);
        assert_eq!(conv2d_forward(&x, &[1.0], &[0.0], &g).unwrap(), x);
    }

    #[test]
    fn ones_kernel_sums_window() {
        let x = t(1, 3, 3, &[1.0; 9]);
        let g = ConvGeometry::square(1, 1, 3, 1, 0);
        let y = conv2d_forward(&x, &[1.0; 9], &[0.0], &g).unwrap();
        assert_eq!(y.dims(), (1, 1, 1));
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn bias_only() {
        let x = t(2, 3, 3, &[0.7; 18]);
        let g = ConvGeometry::square(2, 2, 3, 1, 1);
        let y = conv2d_forward(&x, &[0.0; 36], &[2.5, -1.0], &g).unwrap();
        assert!(y.data()[..9].iter().all(|&v| v == 2.5));
        assert!(y.data()[9..].iter().all(|&v| v == -1.0));
    }

    #[test]
    fn output_dims_formula() {
        let g = ConvGeometry::square(1, 1, 3, 2, 1);
        let x = Tensor::<f64>::zeros(1, 7, 6);
        let y = conv2d_forward(&x, &[0.0; 9], &[0.0], &g).unwrap();
        assert_eq!(y.dims(), (1, (7 + 2 - 3) / 2 + 1, (6 + 2 - 3) / 2 + 1));
    }

    #[test]
    fn mismatched_shapes_are_argument_errors() {
        let x = Tensor::<f64>::zeros(2, 3, 3);
        let g = ConvGeometry::square(1, 1, 3, 1, 0);
        assert!(matches!(conv2d_forward(&x, &[0.0; 9], &[0.0], &g), Err(Error::Argument(_))));
        let g = ConvGeometry::square(1, 2, 5, 1, 0);
        assert!(matches!(conv2d_forward(&x, &[0.0; 50], &[0.0], &g), Err(Error::Argument(_))));
        let g = ConvGeometry::square(1, 2, 3, 1, 0);
        let bad = Tensor::<f64>::zeros(1, 2, 2);
        assert!(matches!(conv2d_backward(&x, &[0.0; 18], &g, &bad), Err(Error::Argument(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let x = t(1, 3, 3, &[1.0, -2.0, 3.0, 0.5, 0.1, 9.0, -1.0, 2.0, 4.0]);
        let g = ConvGeometry::square(2, 1, 3, 1, 1);
        let w: Vec<f64> = (0..18).map(|i| i as f64 * 0.1).collect();
        let gr = conv2d_backward(&x, &w, &g, &Tensor::zeros(2, 3, 3)).unwrap();
        assert!(gr.grad_x.data().iter().all(|&v| v == 0.0));
        assert!(gr.grad_w.iter().all(|&v| v == 0.0));
        assert!(gr.grad_b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_conv_chain_rule() {
        let x = t(1, 1, 1, &[3.0]);
        let g = ConvGeometry::square(1, 1, 1, 1, 0);
        let gr = conv2d_backward(&x, &[2.0], &g, &t(1, 1, 1, &[0.5])).unwrap();
        assert_eq!(gr.grad_w, vec![1.5]);
        assert_eq!(gr.grad_b, vec![0.5]);
        assert_eq!(gr.grad_x.data(), &[1.0]);
    }

    #[test]
    fn maxpool_picks_max_and_first_on_ties() {
        let x = t(1, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let (y, arg) = maxpool_forward(&x, 2, 2).unwrap();
        assert_eq!((y.data(), arg.as_slice()), (&[4.0][..], &[3usize][..]));
        let x = t(1, 2, 2, &[7.0; 4]);
        let (_, arg) = maxpool_forward(&x, 2, 2).unwrap();
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let x = t(1, 2, 4, &[1.0, 5.0, 0.0, 0.0, 2.0, 3.0, 0.0, -1.0]);
        let (y, arg) = maxpool_forward(&x, 2, 2).unwrap();
        assert_eq!(y.data(), &[5.0, 0.0]);
        let gx = maxpool_backward(x.dims(), &arg, &t(1, 1, 2, &[1.0, 1.0])).unwrap();
        assert_eq!(gx.data(), &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn deconv_unit_kernel_stride_one_is_identity() {
        let x = t(1, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let g = DeconvGeometry {
            in_channels: 1,
            out_channels: 1,
            kernel: 1,
            stride: 1,
        };
        assert_eq!(deconv_forward(&x, &[1.0], &g).unwrap(), x);
    }

    #[test]
    fn bilinear_deconv_keeps_constant_interior() {
        for stride in [2usize, 4, 8] {
            let k = 2 * stride;
            let g = DeconvGeometry {
                in_channels: 2,
                out_channels: 2,
                kernel: k,
                stride,
            };
            let x = Tensor::filled(2, 5, 4, 3.25f64);
            let y = deconv_forward(&x, &bilinear_weights(2, k), &g).unwrap();
            // Outputs covered by the full kernel support of two inputs per axis.
            for c in 0..2 {
                for yy in stride..y.height() - stride {
                    for xx in stride..y.width() - stride {
                        assert!((y.at(c, yy, xx) - 3.25).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn bilinear_kernel_profile() {
        let k = bilinear_kernel(4);
        assert_eq!(&k[..4], &[0.0625, 0.1875, 0.1875, 0.0625]);
        assert_eq!(k[5], 0.5625);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let z = t(3, 1, 2, &[1.0, -500.0, 2.0, 0.0, 3.0, 500.0]);
        let p = softmax_forward(&z);
        for px in 0..2 {
            let s: f64 = (0..3).map(|c| p.data()[c * 2 + px]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(p.is_finite());
    }

    #[test]
    fn crop_and_embed_are_adjoint() {
        let x = t(1, 3, 4, &(0..12).map(|v| v as f64).collect::<Vec<_>>());
        let (c, (oy, ox)) = center_crop(&x, 2, 2).unwrap();
        assert_eq!((oy, ox), (0, 1));
        assert_eq!(c.data(), &[1.0, 2.0, 5.0, 6.0]);
        let e = embed_at(&c, 3, 4, oy, ox);
        assert_eq!(e.data()[1], 1.0);
        assert_eq!(e.data()[0], 0.0);
    }
}
