#![allow(dead_code)]

use eaoa_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Largest per-component relative error between an analytic and a numeric
/// gradient. The denominator is floored at `1e-2 * max(1, |g|_inf)`:
/// central differences carry roundoff of order `eps * |loss| / h`, so
/// components far below the gradient's scale are compared absolutely.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = analytic.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let floor = 1e-2 * scale;
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Central finite differences of `f` at `x`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut point = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = point[i];
            point[i] = orig + h;
            let plus = f(&point);
            point[i] = orig - h;
            let minus = f(&point);
            point[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Textbook dense forward pass: relu(x W1^T + b1) ... written without the
/// crate's matrix helpers.
pub fn reference_forward(weights: &[Vec<Vec<f64>>], biases: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    for (l, (w, b)) in weights.iter().zip(biases).enumerate() {
        let mut z = vec![0.0; w.len()];
        for j in 0..w.len() {
            let mut s = b[j];
            for i in 0..a.len() {
                s += w[j][i] * a[i];
            }
            z[j] = if l + 1 < weights.len() { s.max(0.0) } else { s };
        }
        a = z;
    }
    a
}

pub fn unpack(model: &eaoa_core::nn::Mlp) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
    let w = model
        .weights()
        .iter()
        .map(|m| m.iter_rows().map(|r| r.to_vec()).collect())
        .collect();
    (w, model.biases().to_vec())
}
