#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut r))
}

/// Symmetric matrix with entries uniform in `[lo, hi]` and unit diagonal.
pub fn symmetric_uniform(n: usize, lo: f64, hi: f64, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    let mut m = Array2::<f64>::eye(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = r.random_range(lo..=hi);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    m
}

pub fn euclid(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn wine() -> simembed::datasets::LabeledDataset {
    simembed::datasets::Registry::bundled().unwrap().load_dataset("wine").unwrap()
}
