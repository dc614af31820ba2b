//! A small heteroscedastic benchmark-style dataset, generated rather than
//! downloaded, so tests and the bundled CSV need no external data.

use std::f64::consts::PI;

use crate::data::Dataset;
use crate::error::Result;
use crate::math::{Mat, RngStream};

pub const SYNTHETIC_ROWS: usize = 506;
pub const SYNTHETIC_SEED: u64 = 506;

/// Column names of [`synthetic_dataset`].
pub fn synthetic_header() -> Vec<String> {
    (1..=8).map(|i| format!("x{i}")).chain(["y".to_string()]).collect()
}

/// Eight uniform features on `[0, 1]`, of which the first five carry
/// signal (the Friedman #1 function) and the sixth drives the noise level:
/// `y = 10 sin(π x1 x2) + 20 (x3 − 1/2)² + 10 x4 + 5 x5 + (1/2 + 5/2 · x6) ε`.
pub fn synthetic_dataset(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = RngStream::new(seed, 0).derive("synthetic", 0);
    let mut xs = Vec::with_capacity(8 * n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..8).map(|_| rng.uniform()).collect();
        let f = 10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4];
        let sigma = 0.5 + 2.5 * x[5];
        ys.push(f + sigma * rng.standard_normal());
        xs.extend(x);
    }
    Dataset::new(Mat::from_vec(n, 8, xs)?, ys)
}
