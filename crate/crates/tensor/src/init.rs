//! Uniform weight initialisers.

use rand::RngExt;

use crate::rng::SeededRng;
use crate::Tensor;

pub fn kaiming_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut SeededRng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("positive init shape")
}

/// `U(-sqrt(6/fan_in), sqrt(6/fan_in))` with `fan_in = rows`.
pub fn kaiming_uniform(rows: usize, cols: usize, rng: &mut SeededRng) -> Tensor {
    uniform(rows, cols, kaiming_bound(rows), rng)
}

/// `U(-sqrt(6/(fan_in+fan_out)), +...)` with `fan_in = rows`, `fan_out = cols`.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut SeededRng) -> Tensor {
    uniform(rows, cols, glorot_bound(rows, cols), rng)
}
