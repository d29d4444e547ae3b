use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmOptions {
    pub clusters: usize,
    /// `h > 1`; larger values give softer memberships.
    pub fuzzifier: f64,
    /// Stop once no center moves further than this.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for FcmOptions {
    fn default() -> Self {
        Self {
            clusters: 6,
            fuzzifier: 2.0,
            tol: 1e-6,
            max_iter: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyState {
    pub centers: Vec<Vec<f64>>,
    /// `memberships[i][j]`: degree to which element `i` belongs to cluster `j`.
    pub memberships: Vec<Vec<f64>>,
    /// Objective after every membership update and every center update,
    /// in order.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn objective(x: &[Vec<f64>], centers: &[Vec<f64>], w: &[Vec<f64>], h: f64) -> f64 {
    x.iter()
        .zip(w)
        .map(|(xi, wi)| {
            centers
                .iter()
                .zip(wi)
                .map(|(c, wij)| wij.powf(h) * dist2(xi, c))
                .sum::<f64>()
        })
        .sum()
}

/// `w_ij = 1 / sum_k (d_ij / d_ik)^(2/(h-1))`; an element sitting on a
/// center belongs to it (the lowest such index) entirely.
fn update_memberships(x: &[Vec<f64>], centers: &[Vec<f64>], h: f64, w: &mut [Vec<f64>]) {
    let p = 1.0 / (h - 1.0);
    for (xi, wi) in x.iter().zip(w.iter_mut()) {
        let d: Vec<f64> = centers.iter().map(|c| dist2(xi, c)).collect();
        if let Some(hit) = d.iter().position(|&v| v == 0.0) {
            wi.iter_mut().enumerate().for_each(|(j, v)| *v = if j == hit { 1.0 } else { 0.0 });
            continue;
        }
        // Ratios against the nearest center stay in (0, 1].
        let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let r: Vec<f64> = d.iter().map(|&v| (dmin / v).powf(p)).collect();
        let s: f64 = r.iter().sum();
        wi.iter_mut().zip(&r).for_each(|(v, rk)| *v = rk / s);
    }
}

/// `c_j = sum_i w_ij^h x_i / sum_i w_ij^h`; a cluster with no mass keeps
/// its center.
fn update_centers(x: &[Vec<f64>], w: &[Vec<f64>], h: f64, centers: &mut [Vec<f64>]) -> f64 {
    let dim = x[0].len();
    let mut moved: f64 = 0.0;
    for (j, c) in centers.iter_mut().enumerate() {
        let mut num = vec![0.0; dim];
        let mut den = 0.0;
        for (xi, wi) in x.iter().zip(w) {
            let wh = wi[j].powf(h);
            den += wh;
            num.iter_mut().zip(xi).for_each(|(n, v)| *n += wh * v);
        }
        if den > 0.0 {
            num.iter_mut().for_each(|n| *n /= den);
            moved = moved.max(dist2(&num, c).sqrt());
            *c = num;
        }
    }
    moved
}

fn check(x: &[Vec<f64>], opts: &FcmOptions) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Argument("fuzzy c-means needs at least one element".into()));
    }
    if opts.clusters == 0 || opts.clusters > x.len() {
        return Err(Error::Argument(format!(
            "{} clusters for {} elements",
            opts.clusters,
            x.len()
        )));
    }
    if !(opts.fuzzifier > 1.0 && opts.fuzzifier.is_finite()) {
        return Err(Error::Argument(format!("fuzzifier {} must exceed 1", opts.fuzzifier)));
    }
    let dim = x[0].len();
    if x.iter().any(|v| v.len() != dim || v.iter().any(|c| !c.is_finite())) {
        return Err(Error::Argument("elements must be finite vectors of equal length".into()));
    }
    Ok(())
}

/// Initial centers are distinct data points chosen by a seeded shuffle.
pub fn fuzzy_cmeans(x: &[Vec<f64>], opts: &FcmOptions) -> Result<FuzzyState> {
    check(x, opts)?;
    let mut idx: Vec<usize> = (0..x.len()).collect();
    SplitMix64::new(opts.seed).shuffle(&mut idx);
    let centers = idx[..opts.clusters].iter().map(|&i| x[i].clone()).collect();
    fuzzy_cmeans_from(x, centers, opts)
}

pub fn fuzzy_cmeans_from(x: &[Vec<f64>], mut centers: Vec<Vec<f64>>, opts: &FcmOptions) -> Result<FuzzyState> {
    check(x, opts)?;
    if centers.len() != opts.clusters || centers.iter().any(|c| c.len() != x[0].len()) {
        return Err(Error::Argument("initial centers do not match the options".into()));
    }
    let h = opts.fuzzifier;
    let mut w = vec![vec![0.0; opts.clusters]; x.len()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        update_memberships(x, &centers, h, &mut w);
        trace.push(objective(x, &centers, &w, h));
        let moved = update_centers(x, &w, h, &mut centers);
        trace.push(objective(x, &centers, &w, h));
        if moved < opts.tol {
            converged = true;
            break;
        }
    }
    update_memberships(x, &centers, h, &mut w);
    Ok(FuzzyState {
        centers,
        memberships: w,
        objective: trace,
        iterations,
        converged,
    })
}

/// Cluster of largest membership per element, lowest index on ties.
pub fn hard_assign(state: &FuzzyState) -> Vec<usize> {
    state
        .memberships
        .iter()
        .map(|w| {
            w.iter()
                .enumerate()
                .fold(0, |best, (j, v)| if *v > w[best] { j } else { best })
        })
        .collect()
}
