//! Dense eigendecomposition oracle for the power-iteration PCA.

use mcseg_core::pca::{explained_ratio, fit_pca, flatten, DataMatrix, PcaModel, PcaOptions};
use mcseg_core::rng::SplitMix64;
use mcseg_core::volume_io::{generate_phantom, PhantomSpec};
use nalgebra::DMatrix;

/// Relative tolerance on singular values.
pub const SV_TOL: f64 = 1e-6;
/// Absolute floor, as a fraction of the largest singular value, for values
/// that are numerically zero: the oracle reports `sqrt(round-off)` there.
pub const NULL_FLOOR: f64 = 1e-7;
pub const RECON_TOL: f64 = 1e-6;

/// Singular values (descending) and matching left singular vectors from a
/// dense symmetric eigendecomposition of `X X^T`.
pub fn dense_singular_values(x: &DataMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let m = DMatrix::from_row_slice(x.rows(), x.cols(), x.data());
    let gram = &m * m.transpose();
    let eig = gram.symmetric_eigen();
    let mut pairs: Vec<(f64, usize)> = eig.eigenvalues.iter().copied().zip(0..).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let sv = pairs.iter().map(|(l, _)| l.max(0.0).sqrt()).collect();
    let vecs = DMatrix::from_columns(
        &pairs
            .iter()
            .map(|&(_, i)| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (sv, vecs)
}

pub fn random_matrix(seed: u64, c: usize, n: usize) -> DataMatrix {
    let mut r = SplitMix64::new(seed);
    DataMatrix::new(c, n, (0..c * n).map(|_| r.normal()).collect()).unwrap()
}

/// Index of the first singular value outside tolerance, if any.
pub fn singular_value_mismatch(m: &PcaModel, oracle: &[f64]) -> Option<usize> {
    let scale = oracle[0];
    (0..oracle.len()).find(|&s| {
        let got = m.singular_values()[s];
        (got - oracle[s]).abs() > (SV_TOL * oracle[s]).max(NULL_FLOOR * scale)
    })
}

/// `||X - reconstruct(project(X))||_F / ||X||_F` over every column.
pub fn reconstruction_error(x: &DataMatrix, m: &PcaModel) -> f64 {
    let mut err = 0.0;
    for p in 0..x.cols() {
        let col: Vec<f64> = (0..x.rows()).map(|r| x.get(r, p)).collect();
        let back = m.reconstruct(&m.project(&col));
        err += back.iter().zip(&col).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    err.sqrt() / x.frobenius()
}

/// Draws `(C, N)` with `C <= 8`, `N <= 64` from the seed and checks both
/// the singular values and the full-rank reconstruction.
pub fn random_case_passes(seed: u64) -> bool {
    let mut r = SplitMix64::new(seed);
    let (c, n) = (1 + r.below(8), 1 + r.below(64));
    let x = random_matrix(r.next_u64(), c, n);
    let m = fit_pca(&x, &PcaOptions::with_k(c)).unwrap();
    let (oracle, _) = dense_singular_values(&x);
    singular_value_mismatch(&m, &oracle).is_none() && reconstruction_error(&x, &m) < RECON_TOL
}

/// Share of singular-value mass in the top three components of an
/// `h x w`, 31-channel phantom with `noise_sigma = 0.01`.
pub fn phantom_concentration(h: usize, w: usize, seed: u64) -> f64 {
    let (v, _) = generate_phantom(&PhantomSpec::new(h, w, 0.01, seed)).unwrap();
    let m = fit_pca(&flatten(&v), &PcaOptions::with_k(31)).unwrap();
    explained_ratio(&m, 3).unwrap()
}
