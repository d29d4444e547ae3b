//! Channel reduction by principal components.
//!
//! A volume is flattened to a `C x N` matrix (one row per channel). Components
//! are extracted one at a time: power iteration on the Gram matrix of the
//! current residual finds the dominant unit direction `w`, its singular value
//! is `|w^T R|`, and the residual is deflated by `R <- R - w (w^T R)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::volume_io::MultiChannelVolume;

/// Row-major `rows x cols` matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Argument(format!(
                "{rows}x{cols} matrix cannot hold {} values",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self * self^T`, a `rows x rows` symmetric matrix.
    fn gram(&self) -> Vec<f64> {
        let (m, k) = (self.rows, self.cols);
        let mut g = vec![0.0; m * m];
        // SAFETY: the strides describe the row-major buffers above, with the
        // second operand read transposed; all indices stay within bounds.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                m,
                1.0,
                self.data.as_ptr(),
                k as isize,
                1,
                self.data.as_ptr(),
                1,
                k as isize,
                0.0,
                g.as_mut_ptr(),
                m as isize,
                1,
            );
        }
        g
    }
}

/// Row `c` of the result is channel `c` of `v` in row-major pixel order.
pub fn flatten(v: &MultiChannelVolume) -> DataMatrix {
    let data = v.data().iter().map(|&x| x as f64).collect();
    DataMatrix::new(v.channels(), v.pixels(), data).expect("volume dims are positive")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaOptions {
    pub k: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Subtract per-channel means before fitting. Off by default.
    pub center: bool,
    pub seed: u64,
}

impl PcaOptions {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }
}

impl Default for PcaOptions {
    fn default() -> Self {
        Self {
            k: 3,
            tol: 1e-10,
            max_iter: 10_000,
            center: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    components: Vec<Vec<f64>>,
    singular_values: Vec<f64>,
    channel_count: usize,
    mean: Option<Vec<f64>>,
    residual_norm: f64,
    iterations: Vec<usize>,
}

impl PcaModel {
    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn channel_count(&self) -> usize {
        self.channel_count
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn mean(&self) -> Option<&[f64]> {
        self.mean.as_deref()
    }

    /// Frobenius norm of the residual left after the fitted deflations.
    pub fn residual_norm(&self) -> f64 {
        self.residual_norm
    }

    /// Power iterations spent on each component (0 for null directions).
    pub fn iterations(&self) -> &[usize] {
        &self.iterations
    }

    /// Keeps the leading `k` components.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k() {
            return Err(Error::Argument(format!(
                "cannot keep {k} of {} components",
                self.k()
            )));
        }
        let mut m = self.clone();
        m.components.truncate(k);
        m.singular_values.truncate(k);
        m.iterations.truncate(k);
        Ok(m)
    }

    /// Projection of one pixel column onto the retained components.
    pub fn project(&self, column: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|w| {
                w.iter()
                    .enumerate()
                    .map(|(c, wc)| wc * (column[c] - self.mean.as_ref().map_or(0.0, |m| m[c])))
                    .sum()
            })
            .collect()
    }

    /// Inverse of [`project`](Self::project): `mean + sum_s coord_s w_s`.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self
            .mean
            .clone()
            .unwrap_or_else(|| vec![0.0; self.channel_count]);
        for (w, &a) in self.components.iter().zip(coords) {
            for (o, wc) in out.iter_mut().zip(w) {
                *o += a * wc;
            }
        }
        out
    }

    pub fn check_invariants(&self) -> Result<()> {
        for (s, w) in self.components.iter().enumerate() {
            let n = dot(w, w).sqrt();
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::Degenerate(format!("component {s} has norm {n}")));
            }
            for (t, u) in self.components[..s].iter().enumerate() {
                let d = dot(w, u);
                if d.abs() > 1e-8 {
                    return Err(Error::Degenerate(format!(
                        "components {t} and {s} overlap by {d:e}"
                    )));
                }
            }
        }
        if self.singular_values.windows(2).any(|p| p[1] > p[0]) {
            return Err(Error::Degenerate("singular values not sorted".into()));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(g: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    (0..n).map(|r| dot(&g[r * n..(r + 1) * n], v)).collect()
}

/// Removes the projections onto `basis` (modified Gram-Schmidt).
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let d = dot(v, b);
        for (x, bx) in v.iter_mut().zip(b) {
            *x -= d * bx;
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Flips `w` so its largest-magnitude entry (first on ties) is non-negative.
fn fix_sign(w: &mut [f64]) {
    let mut best = 0;
    for (i, x) in w.iter().enumerate() {
        if x.abs() > w[best].abs() {
            best = i;
        }
    }
    if w[best] < 0.0 {
        w.iter_mut().for_each(|x| *x = -*x);
    }
}

/// A unit vector orthogonal to `basis`, taken from the standard basis.
fn null_direction(c: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    let mut best: Option<Vec<f64>> = None;
    let mut best_norm = 0.0;
    for i in 0..c {
        let mut e = vec![0.0; c];
        e[i] = 1.0;
        orthogonalize(&mut e, basis);
        orthogonalize(&mut e, basis);
        let n = dot(&e, &e).sqrt();
        if n > best_norm + 1e-12 {
            best_norm = n;
            best = Some(e);
        }
    }
    let mut e = best.expect("fewer than C components fitted");
    normalize(&mut e);
    e
}

/// Relative Gram trace below which the residual is treated as exactly null.
const NULL_TRACE: f64 = 1e-26;

/// Unconverged steps between squarings of the iteration operator. Squaring
/// keeps the dominant eigenvector but squares every eigenvalue ratio, so
/// nearly equal leading pairs separate in a handful of rounds.
const SQUARE_EVERY: usize = 64;

/// `A^2 / trace(A^2)` for a symmetric `n x n` matrix.
fn square_normalized(a: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = dot(&a[i * n..(i + 1) * n], &a[j * n..(j + 1) * n]);
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    let tr: f64 = (0..n).map(|i| out[i * n + i]).sum();
    if tr > 0.0 {
        out.iter_mut().for_each(|x| *x /= tr);
    }
    out
}

pub fn fit_pca(x: &DataMatrix, opts: &PcaOptions) -> Result<PcaModel> {
    let c = x.rows();
    if opts.k == 0 || opts.k > c {
        return Err(Error::Argument(format!(
            "requested {} components from {c} channels",
            opts.k
        )));
    }
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("data matrix contains non-finite values".into()));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::Argument("tol must be positive and max_iter non-zero".into()));
    }

    let mut resid = x.clone();
    let mean = if opts.center {
        let n = x.cols() as f64;
        let means: Vec<f64> = (0..c).map(|r| x.row(r).iter().sum::<f64>() / n).collect();
        for r in 0..c {
            let m = means[r];
            resid.data[r * x.cols..(r + 1) * x.cols]
                .iter_mut()
                .for_each(|v| *v -= m);
        }
        Some(means)
    } else {
        None
    };
    let total_trace = resid.frobenius().powi(2);

    let mut rng = SplitMix64::new(opts.seed);
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(opts.k);
    let mut singular_values = Vec::with_capacity(opts.k);
    let mut iterations = Vec::with_capacity(opts.k);

    for s in 0..opts.k {
        let g = resid.gram();
        let trace: f64 = (0..c).map(|i| g[i * c + i]).sum();
        let mut used = 0;
        let mut w = if total_trace == 0.0 || trace <= NULL_TRACE * total_trace {
            null_direction(c, &components)
        } else {
            let mut v: Vec<f64> = (0..c).map(|_| rng.uniform() - 0.5).collect();
            orthogonalize(&mut v, &components);
            if normalize(&mut v) == 0.0 {
                v = null_direction(c, &components);
            }
            let mut op: Vec<f64> = g.iter().map(|x| x / trace).collect();
            let mut converged = false;
            let mut diff = f64::INFINITY;
            let mut null = false;
            while used < opts.max_iter {
                used += 1;
                if used % SQUARE_EVERY == 0 {
                    op = square_normalized(&op, c);
                }
                let mut u = mat_vec(&op, c, &v);
                orthogonalize(&mut u, &components);
                if normalize(&mut u) == 0.0 {
                    null = true;
                    break;
                }
                diff = u
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                v = u;
                if diff < opts.tol {
                    converged = true;
                    break;
                }
            }
            if null {
                null_direction(c, &components)
            } else if !converged {
                return Err(Error::Convergence {
                    component: s,
                    iterations: used,
                    residual: diff,
                });
            } else {
                v
            }
        };
        fix_sign(&mut w);

        // Singular value and deflation of the residual.
        let proj: Vec<f64> = (0..resid.cols)
            .map(|p| (0..c).map(|r| w[r] * resid.data[r * resid.cols + p]).sum())
            .collect();
        let sigma = dot(&proj, &proj).sqrt();
        for r in 0..c {
            let wr = w[r];
            let row = &mut resid.data[r * resid.cols..(r + 1) * resid.cols];
            for (v, pv) in row.iter_mut().zip(&proj) {
                *v -= wr * pv;
            }
        }
        components.push(w);
        singular_values.push(sigma);
        iterations.push(used);
    }

    // Power iteration yields the dominant direction at each step, so the
    // order is already non-increasing up to convergence error; a stable
    // sort removes round-off inversions between near-equal values.
    let mut order: Vec<usize> = (0..opts.k).collect();
    order.sort_by(|&a, &b| singular_values[b].total_cmp(&singular_values[a]));
    let model = PcaModel {
        components: order.iter().map(|&i| components[i].clone()).collect(),
        singular_values: order.iter().map(|&i| singular_values[i]).collect(),
        iterations: order.iter().map(|&i| iterations[i]).collect(),
        channel_count: c,
        mean,
        residual_norm: resid.frobenius(),
    };
    model.check_invariants()?;
    Ok(model)
}

/// `sum(sigma[..top_n]) / sum(sigma)`, using singular values, not their squares.
pub fn explained_ratio(m: &PcaModel, top_n: usize) -> Result<f64> {
    if m.k() != m.channel_count() {
        return Err(Error::Argument(format!(
            "explained ratio needs all {} components, model has {}",
            m.channel_count(),
            m.k()
        )));
    }
    if top_n > m.k() {
        return Err(Error::Argument(format!(
            "top_n {top_n} exceeds {} fitted components",
            m.k()
        )));
    }
    let total: f64 = m.singular_values.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("all singular values are zero".into()));
    }
    let top: f64 = m.singular_values[..top_n].iter().sum();
    Ok((top / total).clamp(0.0, 1.0))
}

/// Cumulative explained ratios for 1..=C components.
pub fn cumulative_ratios(m: &PcaModel) -> Result<Vec<f64>> {
    (1..=m.k()).map(|n| explained_ratio(m, n)).collect()
}

/// Projects every pixel of `v` onto the model's components.
pub fn transform(v: &MultiChannelVolume, m: &PcaModel) -> Result<MultiChannelVolume> {
    if v.channels() != m.channel_count() {
        return Err(Error::Argument(format!(
            "volume has {} channels, model expects {}",
            v.channels(),
            m.channel_count()
        )));
    }
    let n = v.pixels();
    let mut out = vec![0f32; m.k() * n];
    let mut column = vec![0.0; v.channels()];
    for p in 0..n {
        for (c, slot) in column.iter_mut().enumerate() {
            *slot = v.data()[c * n + p] as f64;
        }
        for (s, value) in m.project(&column).into_iter().enumerate() {
            out[s * n + p] = value as f32;
        }
    }
    MultiChannelVolume::new(m.k(), v.height(), v.width(), out)
}

/// Affine map of all channels jointly onto `[0, 255]` using the global
/// minimum and maximum.
pub fn normalize_0_255(v: &MultiChannelVolume) -> Result<MultiChannelVolume> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in v.data() {
        lo = lo.min(x as f64);
        hi = hi.max(x as f64);
    }
    if hi <= lo {
        return Err(Error::DegenerateRange(lo));
    }
    let span = hi - lo;
    let data = v
        .data()
        .iter()
        .map(|&x| (255.0 * ((x as f64 - lo) / span)) as f32)
        .collect();
    MultiChannelVolume::new(v.channels(), v.height(), v.width(), data)
}

/// Per-sample reduction used ahead of the network and the baselines:
/// fit `k` components on the sample itself, project, then normalize.
pub fn reduce_volume(v: &MultiChannelVolume, opts: &PcaOptions) -> Result<(MultiChannelVolume, PcaModel)> {
    let model = fit_pca(&flatten(v), opts)?;
    let reduced = normalize_0_255(&transform(v, &model)?)?;
    Ok((reduced, model))
}
