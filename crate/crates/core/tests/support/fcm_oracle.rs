//! Fuzzy c-means sanity properties.

use mcseg_core::baselines::{fuzzy_cmeans, FcmOptions};
use mcseg_core::rng::SplitMix64;

pub const OBJECTIVE_SLACK: f64 = 1e-9;
pub const MEAN_TOL: f64 = 1e-9;

/// Three loose blobs so clustering has something to find.
pub fn random_points(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut r = SplitMix64::new(seed);
    (0..n)
        .map(|i| (0..dim).map(|d| 4.0 * ((i % 3 + d) % 3) as f64 + r.normal()).collect())
        .collect()
}

/// Largest increase of the objective between consecutive half-steps.
pub fn worst_objective_increase(seed: u64) -> f64 {
    let x = random_points(seed, 60, 3);
    let s = fuzzy_cmeans(&x, &FcmOptions { clusters: 3, seed, ..FcmOptions::default() }).unwrap();
    s.objective.windows(2).map(|p| p[1] - p[0]).fold(f64::NEG_INFINITY, f64::max)
}

/// Largest coordinate gap between the single center and the data mean.
pub fn single_center_mean_gap(seed: u64) -> f64 {
    let x = random_points(seed, 37, 4);
    let s = fuzzy_cmeans(&x, &FcmOptions { clusters: 1, seed, ..FcmOptions::default() }).unwrap();
    (0..4)
        .map(|d| {
            let mean = x.iter().map(|v| v[d]).sum::<f64>() / x.len() as f64;
            (s.centers[0][d] - mean).abs()
        })
        .fold(0.0, f64::max)
}
