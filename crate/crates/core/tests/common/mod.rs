use std::f64::consts::TAU;

use rydberg_excitation::fitting::{dominant_frequency, least_squares};

/// Frequency of `a + b·cos(2π f t + φ)` fitted to a sampled trace.
pub fn oscillation_frequency(t: &[f64], y: &[f64]) -> f64 {
    let (f0, _, _) = dominant_frequency(t, y);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let model = |p: &[f64], x: f64| p[0] + p[1] * (TAU * p[2] * x).cos() + p[3] * (TAU * p[2] * x).sin();
    least_squares(model, t, y, None, &[mean, -0.5, f0, 0.0]).unwrap().param("p2")
}
