//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code paths it is used to check.

#![allow(dead_code)]

use std::f64::consts::PI;

/// `(1/π) ∫₀^π g(θ) dθ` by the trapezoid rule; exponentially accurate for
/// the smooth periodic integrands of the Bessel representations below.
fn periodic_mean(g: impl Fn(f64) -> f64, panels: usize) -> f64 {
    let h = PI / panels as f64;
    let mut s = 0.5 * (g(0.0) + g(PI));
    for k in 1..panels {
        s += g(k as f64 * h);
    }
    s * h / PI
}

/// `I₀(x) − 1 = (1/π) ∫₀^π (e^{x cos θ} − 1) dθ`.
pub fn bessel_i0_minus_one(x: f64) -> f64 {
    periodic_mean(|th| (x * th.cos()).exp_m1(), 4000)
}

/// `I₀(x)`.
pub fn bessel_i0(x: f64) -> f64 {
    x.exp() * periodic_mean(|th| (x * (th.cos() - 1.0)).exp(), 4000)
}

/// `I₁(x) = (1/π) ∫₀^π e^{x cos θ} cos θ dθ`.
pub fn bessel_i1(x: f64) -> f64 {
    x.exp() * periodic_mean(|th| (x * (th.cos() - 1.0)).exp() * th.cos(), 4000)
}

/// Row-major dense `n × n` matrix product.
pub fn dense_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

/// `e^{B}` by scaling and squaring a 30-term Taylor polynomial.
pub fn dense_expm(b: &[f64], n: usize) -> Vec<f64> {
    let norm = (0..n)
        .map(|j| (0..n).map(|i| b[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0;
    while norm / 2f64.powi(squarings) > 0.25 {
        squarings += 1;
    }
    let scale = 2f64.powi(-squarings);
    let scaled: Vec<f64> = b.iter().map(|v| v * scale).collect();
    let mut result = vec![0.0; n * n];
    let mut term = vec![0.0; n * n];
    for i in 0..n {
        result[i * n + i] = 1.0;
        term[i * n + i] = 1.0;
    }
    for k in 1..=30 {
        term = dense_mul(&term, &scaled, n);
        term.iter_mut().for_each(|v| *v /= k as f64);
        result.iter_mut().zip(&term).for_each(|(r, t)| *r += t);
    }
    for _ in 0..squarings {
        result = dense_mul(&result, &result, n);
    }
    result
}

pub fn dense_apply(m: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| (0..n).map(|j| m[i * n + j] * x[j]).sum())
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let size = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / size.max(f64::MIN_POSITIVE)
}

/// Householder reflection `I − 2vvᵀ/(vᵀv)`.
pub fn householder(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] = if i == j { 1.0 } else { 0.0 } - 2.0 * v[i] * v[j] / vv;
        }
    }
    h
}
