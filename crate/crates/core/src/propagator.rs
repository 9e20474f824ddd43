//! Trajectories of `x' = -κx + Ax`.
//!
//! `x(t) = e^{-κt} e^{tA} x(0)`: the decay term commutes with `A`, so the
//! propagator evolves the `κ = 0` problem and rescales each frame. The
//! exponential is only ever applied to vectors, through a substepped
//! truncated Taylor series, so a step costs a handful of `O(n²)`
//! matrix-vector products.

use rand::Rng;

use crate::matrix::{dot, norm2};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Matrix, Result};

pub const DEFAULT_TOL: f64 = 1e-10;

/// Largest admissible accuracy target.
pub const MAX_TOL: f64 = 1e-4;

/// Vectors whose norm exceeds this are reported as overflowed. Squares of
/// coordinates must stay finite for the downstream moment estimators.
pub const OVERFLOW_LIMIT: f64 = 1e150;

pub const NORM_MAX_ITERATIONS: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub kappa: f64,
    pub times: Vec<f64>,
    pub tol: f64,
}

impl SystemConfig {
    pub fn new(kappa: f64, times: Vec<f64>) -> Result<Self> {
        Self::with_tol(kappa, times, DEFAULT_TOL)
    }

    pub fn with_tol(kappa: f64, times: Vec<f64>, tol: f64) -> Result<Self> {
        let cfg = SystemConfig { kappa, times, tol };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.kappa.is_finite() {
            return Err(Error::NonFinite("kappa"));
        }
        if self.times.is_empty() {
            return Err(Error::invalid("times", "at least one time is required"));
        }
        if self.times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::invalid("times", "times must be finite and non-negative"));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("times", "times must be strictly increasing"));
        }
        if !(self.tol > 0.0 && self.tol <= MAX_TOL) {
            return Err(Error::invalid(
                "tol",
                format!("must lie in (0, {MAX_TOL:e}], got {}", self.tol),
            ));
        }
        Ok(())
    }
}

/// State of one replica at one time. When `overflow` is set the coordinates
/// are NaN and the frame carries no information.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFrame {
    pub t: f64,
    pub x: Vec<f64>,
    pub overflow: bool,
}

impl TrajectoryFrame {
    fn overflowed(t: f64, n: usize) -> Self {
        TrajectoryFrame {
            t,
            x: vec![f64::NAN; n],
            overflow: true,
        }
    }
}

/// Substep count and Taylor order used by [`expm_action`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaylorPlan {
    pub steps: usize,
    pub order: usize,
}

impl TaylorPlan {
    /// Plan for `e^{tB}` given a bound `norm ≥ ‖B‖`.
    ///
    /// Uses `s = max(1, ⌈t·norm⌉)` substeps, so `θ = t·norm/s ≤ 1`, and the
    /// smallest order `m` whose remainder bound
    /// `θ^{m+1}/(m+1)! · 1/(1 − θ/(m+2))` is below `tol/s`.
    pub fn new(norm: f64, t: f64, tol: f64) -> Self {
        let scaled = norm * t;
        if scaled == 0.0 {
            return TaylorPlan { steps: 0, order: 0 };
        }
        let steps = (scaled.ceil() as usize).max(1);
        let theta = scaled / steps as f64;
        let target = tol / steps as f64;
        // term = θ^{m+1}/(m+1)!
        let mut order = 0usize;
        let mut term = theta;
        loop {
            let bound = term / (1.0 - theta / (order as f64 + 2.0));
            if bound <= target || order >= 100 {
                break;
            }
            order += 1;
            term *= theta / (order as f64 + 1.0);
        }
        TaylorPlan {
            steps,
            order: order.max(1),
        }
    }

    /// Matrix-vector products this plan costs.
    pub fn matvecs(&self) -> usize {
        self.steps * self.order
    }
}

fn check_square(b: &Matrix, v: &[f64]) -> Result<()> {
    if !b.is_square() {
        return Err(Error::DimensionMismatch {
            expected: b.rows(),
            actual: b.cols(),
        });
    }
    if v.len() != b.cols() {
        return Err(Error::DimensionMismatch {
            expected: b.cols(),
            actual: v.len(),
        });
    }
    Ok(())
}

/// Approximate `e^{tB} v` without forming `e^{tB}`.
pub fn expm_action(b: &Matrix, v: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
    check_square(b, v)?;
    if !b.is_finite() {
        return Err(Error::NonFinite("matrix"));
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("vector"));
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("time"));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    expm_action_with_norm(b, b.norm_one(), v, t, tol)
}

/// [`expm_action`] with a caller-supplied bound on `‖B‖`; inputs are assumed
/// checked.
pub(crate) fn expm_action_with_norm(
    b: &Matrix,
    norm: f64,
    v: &[f64],
    t: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let plan = TaylorPlan::new(norm, t.abs(), tol);
    let mut acc = v.to_vec();
    if plan.steps == 0 {
        return Ok(acc);
    }
    let h = t / plan.steps as f64;
    let n = v.len();
    let mut term = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..plan.steps {
        term.copy_from_slice(&acc);
        for k in 1..=plan.order {
            b.matvec_into(&term, &mut next);
            let c = h / k as f64;
            for ((t_i, a_i), nx) in term.iter_mut().zip(acc.iter_mut()).zip(&next) {
                *t_i = c * nx;
                *a_i += *t_i;
            }
        }
        let size = norm2(&acc);
        if !size.is_finite() || size > OVERFLOW_LIMIT {
            return Err(Error::Overflow {
                limit: OVERFLOW_LIMIT,
            });
        }
    }
    Ok(acc)
}

/// Frames of `x(t) = e^{t(A − κI)} x0` at every `cfg.times`.
///
/// Frames are computed incrementally: frame `i+1` continues from frame `i`.
/// An overflow marks that frame and every later one instead of failing the
/// whole trajectory.
pub fn evolve(a: &Matrix, x0: &[f64], cfg: &SystemConfig) -> Result<Vec<TrajectoryFrame>> {
    check_square(a, x0)?;
    cfg.validate()?;
    if !a.is_finite() {
        return Err(Error::NonFinite("matrix"));
    }
    if !x0.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("initial vector"));
    }
    let n = x0.len();
    let norm = a.norm_one();
    let mut frames = Vec::with_capacity(cfg.times.len());
    let mut y = x0.to_vec();
    let mut t_prev = 0.0;
    let mut overflowed = false;
    for &t in &cfg.times {
        if overflowed {
            frames.push(TrajectoryFrame::overflowed(t, n));
            continue;
        }
        if t > t_prev {
            match expm_action_with_norm(a, norm, &y, t - t_prev, cfg.tol) {
                Ok(next) => y = next,
                Err(Error::Overflow { .. }) => {
                    overflowed = true;
                    frames.push(TrajectoryFrame::overflowed(t, n));
                    continue;
                }
                Err(e) => return Err(e),
            }
            t_prev = t;
        }
        let decay = (-cfg.kappa * t).exp();
        let x: Vec<f64> = y.iter().map(|v| decay * v).collect();
        if x.iter().any(|v| !v.is_finite()) || norm2(&x) > OVERFLOW_LIMIT {
            frames.push(TrajectoryFrame::overflowed(t, n));
        } else {
            frames.push(TrajectoryFrame {
                t,
                x,
                overflow: false,
            });
        }
    }
    Ok(frames)
}

/// Largest singular value of `a` by power iteration on `AᵀA`.
///
/// Stops once successive estimates differ by less than `tol` relatively. The
/// estimate `‖Av‖` for a unit vector `v` never exceeds the true norm.
pub fn operator_norm(a: &Matrix, tol: f64) -> Result<f64> {
    operator_norm_seeded(a, tol, 0x0005_eed0_fa11_u64)
}

/// [`operator_norm`] with an explicit seed for the random start vector.
pub fn operator_norm_seeded(a: &Matrix, tol: f64, seed: u64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite("matrix"));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::invalid("tol", "must be positive"));
    }
    if a.rows() == 0 || a.cols() == 0 || a.norm_one() == 0.0 {
        return Ok(0.0);
    }
    let mut rng = stream_rng(seed, Stream::Norm);
    let mut v: Vec<f64> = (0..a.cols()).map(|_| rng.random::<f64>() - 0.5).collect();
    let s = norm2(&v);
    v.iter_mut().for_each(|x| *x /= s);
    let mut u = vec![0.0; a.rows()];
    let mut prev = 0.0;
    let mut change = f64::INFINITY;
    for _ in 0..NORM_MAX_ITERATIONS {
        a.matvec_into(&v, &mut u);
        let est = dot(&u, &u).sqrt();
        if est == 0.0 {
            // Start vector in the null space; restart elsewhere.
            v.iter_mut().for_each(|x| *x = rng.random::<f64>() - 0.5);
            let s = norm2(&v);
            v.iter_mut().for_each(|x| *x /= s);
            continue;
        }
        change = (est - prev).abs() / est;
        if change < tol {
            return Ok(est);
        }
        prev = est;
        a.matvec_t_into(&u, &mut v);
        let s = norm2(&v);
        v.iter_mut().for_each(|x| *x /= s);
    }
    Err(Error::NoConvergence {
        iterations: NORM_MAX_ITERATIONS,
        last_change: change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_pure_decay() {
        let a = Matrix::zeros(2, 2);
        let cfg = SystemConfig::new(0.5, vec![2.0]).unwrap();
        let frames = evolve(&a, &[1.0, 1.0], &cfg).unwrap();
        let e = (-1.0f64).exp();
        assert_eq!(frames[0].x, vec![e, e]);
    }

    #[test]
    fn diagonal_matrix_decouples() {
        let d = [0.3, -1.2, 2.0];
        let a = Matrix::from_diagonal(&d);
        let x0 = [1.0, 2.0, -0.5];
        let cfg = SystemConfig::new(0.0, vec![0.0, 0.7, 1.5]).unwrap();
        let frames = evolve(&a, &x0, &cfg).unwrap();
        assert_eq!(frames[0].x, x0.to_vec());
        for f in &frames {
            for i in 0..3 {
                let want = (d[i] * f.t).exp() * x0[i];
                assert!((f.x[i] - want).abs() <= DEFAULT_TOL * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn identity_generator_gives_e() {
        let v = [1.0, -2.0, 0.5];
        let out = expm_action(&Matrix::identity(3), &v, 1.0, 1e-10).unwrap();
        for (o, x) in out.iter().zip(v) {
            assert!((o - std::f64::consts::E * x).abs() <= 1e-10 * (std::f64::consts::E * x).abs());
        }
    }

    #[test]
    fn zero_generator_is_identity() {
        let v = [3.0, 4.0];
        assert_eq!(expm_action(&Matrix::zeros(2, 2), &v, 5.0, 1e-10).unwrap(), v.to_vec());
        assert_eq!(expm_action(&Matrix::identity(2), &v, 0.0, 1e-10).unwrap(), v.to_vec());
    }

    #[test]
    fn plan_respects_step_and_remainder_rules() {
        let p = TaylorPlan::new(36.0, 2.0, 1e-10);
        assert_eq!(p.steps, 72);
        // θ = 1: (m+2)/((m+1)!·(m+1)) ≤ 1e-10/72 first holds at m = 14.
        assert_eq!(p.order, 14);
        assert_eq!(TaylorPlan::new(0.0, 3.0, 1e-10).steps, 0);
    }

    #[test]
    fn input_errors() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(
            expm_action(&a, &[1.0, 1.0, 1.0], 1.0, 1e-10),
            Err(Error::DimensionMismatch { .. })
        ));
        let a = Matrix::identity(2);
        assert!(matches!(
            expm_action(&a, &[1.0], 1.0, 1e-10),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            expm_action(&a, &[1.0, f64::NAN], 1.0, 1e-10),
            Err(Error::NonFinite(_))
        ));
        let bad = Matrix::from_diagonal(&[f64::INFINITY, 0.0]);
        assert!(matches!(
            evolve(&bad, &[1.0, 1.0], &SystemConfig::new(0.0, vec![1.0]).unwrap()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn overflow_is_distinct_error_and_flags_frames() {
        let a = Matrix::from_diagonal(&[400.0, 0.0]);
        assert!(matches!(
            expm_action(&a, &[1.0, 1.0], 1.0, 1e-10),
            Err(Error::Overflow { .. })
        ));
        let cfg = SystemConfig::new(0.0, vec![0.1, 1.0, 2.0]).unwrap();
        let frames = evolve(&a, &[1.0, 1.0], &cfg).unwrap();
        assert!(!frames[0].overflow);
        assert!(frames[1].overflow && frames[2].overflow);
        assert!(frames[2].x.iter().all(|v| v.is_nan()));
    }

    #[test]
    fn config_validation() {
        assert!(SystemConfig::new(0.0, vec![]).is_err());
        assert!(SystemConfig::new(0.0, vec![1.0, 1.0]).is_err());
        assert!(SystemConfig::new(0.0, vec![-1.0]).is_err());
        assert!(SystemConfig::with_tol(0.0, vec![1.0], 1e-3).is_err());
        assert!(SystemConfig::with_tol(0.0, vec![1.0], 0.0).is_err());
        assert!(SystemConfig::with_tol(0.0, vec![0.0, 1.0], 1e-4).is_ok());
    }

    #[test]
    fn norm_of_simple_matrices() {
        let d = Matrix::from_diagonal(&[3.0, -1.0]);
        assert!((operator_norm(&d, 1e-12).unwrap() - 3.0).abs() < 1e-10);
        let nil = Matrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        assert!((operator_norm(&nil, 1e-12).unwrap() - 1.0).abs() < 1e-10);
        assert_eq!(operator_norm(&Matrix::zeros(3, 3), 1e-12).unwrap(), 0.0);
    }
}
