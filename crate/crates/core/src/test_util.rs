//! Seeded random fixtures for unit tests.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(r))
}

pub fn random_vector(r: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(r))
}

pub fn random_spd(r: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let b = random_matrix(r, m, m);
    &b * b.transpose() + DMatrix::identity(m, m) * (m as f64) * 0.1
}

/// `n x m` positions with every row L1-normalized.
pub fn random_positions(r: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
    let mut p = random_matrix(r, n, m);
    for mut row in p.row_iter_mut() {
        let l1 = row.iter().map(|x| x.abs()).sum::<f64>();
        row /= l1;
    }
    p
}
