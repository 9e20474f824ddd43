//! Quadrature rules used by the limit laws.

use std::f64::consts::PI;

/// Gauss–Chebyshev rule of the second kind: `∫_{-1}^{1} f(x)√(1−x²) dx`
/// with `nodes` points, exact for polynomials of degree `2·nodes − 1`.
pub fn gauss_chebyshev_u(nodes: usize, f: impl Fn(f64) -> f64) -> f64 {
    let np1 = (nodes + 1) as f64;
    (1..=nodes)
        .map(|k| {
            let angle = k as f64 * PI / np1;
            let s = angle.sin();
            s * s * f(angle.cos())
        })
        .sum::<f64>()
        * PI
        / np1
}

/// Result of a node-doubling quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Converged {
    pub value: f64,
    pub nodes: usize,
    /// `|Q(nodes) − Q(nodes/2)|`.
    pub change: f64,
}

/// Double the Chebyshev-U node count from `start` until successive values
/// agree to `rel_tol` (relative to `max(|value|, floor)`), or `max_nodes` is
/// reached.
pub fn gauss_chebyshev_u_adaptive(
    f: impl Fn(f64) -> f64,
    start: usize,
    rel_tol: f64,
    floor: f64,
    max_nodes: usize,
) -> Converged {
    let mut nodes = start.max(1);
    let mut prev = gauss_chebyshev_u(nodes, &f);
    loop {
        nodes *= 2;
        let value = gauss_chebyshev_u(nodes, &f);
        let change = (value - prev).abs();
        if change <= rel_tol * value.abs().max(floor) || nodes >= max_nodes || !value.is_finite()
        {
            return Converged {
                value,
                nodes,
                change,
            };
        }
        prev = value;
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let n = nodes;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss–Legendre rule: `pieces` equal panels on `[a, b]`.
pub fn composite_legendre(
    rule: &(Vec<f64>, Vec<f64>),
    a: f64,
    b: f64,
    pieces: usize,
    f: impl Fn(f64) -> f64,
) -> f64 {
    let h = (b - a) / pieces as f64;
    let mut total = 0.0;
    for p in 0..pieces {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        total += rule
            .0
            .iter()
            .zip(&rule.1)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half;
    }
    total
}
