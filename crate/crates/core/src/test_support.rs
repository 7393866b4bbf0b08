//! Shared helpers for unit tests.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::Core;
use crate::linalg::qr;
use crate::mps::Mps;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_mps(rng: &mut ChaCha8Rng, d: usize, n: usize, bond: usize) -> Mps {
    let cores = (0..n)
        .map(|i| {
            let l = if i == 0 { 1 } else { bond };
            let r = if i + 1 == n { 1 } else { bond };
            Core::from_data(l, d, r, random_vec(rng, l * d * r))
        })
        .collect();
    Mps::from_cores(cores).unwrap()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `U diag(spectrum) V^T` with random orthonormal factors.
pub fn matrix_with_spectrum(spectrum: &[f64], rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng(seed);
    let k = spectrum.len();
    let (u, _) = qr(DMatrix::from_vec(rows, k, random_vec(&mut rng, rows * k)));
    let (v, _) = qr(DMatrix::from_vec(cols, k, random_vec(&mut rng, cols * k)));
    let s = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(spectrum));
    u * s * v.transpose()
}
