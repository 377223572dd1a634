#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SR: u32 = 22050;

pub fn sine(freq: f64, sample_rate: u32, len: usize, amp: f64) -> Vec<f64> {
    (0..len)
        .map(|n| amp * (2.0 * PI * freq * n as f64 / sample_rate as f64).sin())
        .collect()
}

/// Uniform white noise scaled to the requested RMS.
pub fn noise(len: usize, rms: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Uniform on [-a, a] has RMS a / sqrt(3).
    let a = rms * 3f64.sqrt();
    (0..len).map(|_| rng.gen_range(-a..a)).collect()
}

/// Index of the largest value, first one on ties.
pub fn argmax(v: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in v.into_iter().enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// Direct O(n^2) DFT magnitudes of the non-negative bins.
pub fn naive_dft_magnitudes(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let th = -2.0 * PI * (k * t % n) as f64 / n as f64;
                re += v * th.cos();
                im += v * th.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}
