#![allow(dead_code)]

use grassfm::bench::random_camera;
use grassfm::model::RotationStack;
use nalgebra::{DMatrix, Matrix3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn rotations(frames: usize, rng: &mut ChaCha8Rng) -> RotationStack {
    RotationStack::new((0..frames).map(|_| random_camera(rng)).collect()).unwrap()
}

/// Random proper 3×3 rotation from the QR factor of a Gaussian matrix.
pub fn rotation3(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let g = Matrix3::from_fn(|_, _| StandardNormal.sample(rng));
    let mut q = g.qr().q();
    if q.determinant() < 0.0 {
        q.column_mut(2).neg_mut();
    }
    q
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Singular values, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}
