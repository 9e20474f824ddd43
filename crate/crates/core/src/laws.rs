//! Closed-form limit laws for the coordinate distribution of `x(t)`.
//!
//! Variances follow the convention of the limit CDF `Φ((λ − a)/√σ)`: the
//! field `sigma` of a [`GaussianLaw`] is a variance, not a standard
//! deviation.
//!
//! Non-symmetric ensembles (initial vector of ones):
//!
//! * mean `a(t) = e^{-κt}`,
//! * variance `σ(t) = e^{-2κt} Σ_{m≥1} (wt)^{2m}/(m!)² = e^{-2κt}(I₀(2wt) − 1)`,
//! * covariance kernel `R(t,s) = Σ_{m≥0} (w²ts)^m/(m!)² = I₀(2w√(ts))` at `κ = 0`.
//!
//! Symmetric ensembles average `e^{(λ−κ)t}` against the semicircle density
//! `ρ(λ) = √(4w² − λ²)/(2πw²)` on `[−2w, 2w]`, normalised to unit mass so
//! that the mean at `t = 0` is one. The second moment at `t` equals the mean
//! at `2t` (with the same `κ`), which gives the variance.
//!
//! With i.i.d. random initial data the limit is the law of
//! `xi_scale·ξ + z_scale·z`, see [`MixtureLaw`].

use std::f64::consts::{FRAC_2_PI, SQRT_2};

use crate::ensembles::{Family, IidInitial, InitialLaw};
use crate::quadrature::{composite_legendre, gauss_chebyshev_u_adaptive, gauss_legendre, Converged};
use crate::{Error, Result};

/// Relative agreement required between successive semicircle quadratures.
pub const SEMICIRCLE_TOL: f64 = 1e-12;
const SEMICIRCLE_MAX_NODES: usize = 1 << 18;

/// Series terms below this fraction of the partial sum are dropped.
const SERIES_CUTOFF: f64 = 1e-17;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// A distribution function that can be compared against samples.
///
/// `cdf_left` is the left limit `F(x−)`; it differs from `cdf` only at atoms.
pub trait Cdf {
    fn cdf(&self, x: f64) -> f64;

    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }
}

impl<F: Fn(f64) -> f64> Cdf for F {
    fn cdf(&self, x: f64) -> f64 {
        self(x)
    }
}

/// `N(a, sigma)`; `sigma` is the variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLaw {
    pub a: f64,
    pub sigma: f64,
}

impl GaussianLaw {
    pub fn new(a: f64, sigma: f64) -> Result<Self> {
        if !(a.is_finite() && sigma.is_finite()) {
            return Err(Error::NonFinite("gaussian law"));
        }
        if sigma < 0.0 {
            return Err(Error::invalid("sigma", "variance must be non-negative"));
        }
        Ok(GaussianLaw { a, sigma })
    }

    pub fn sd(&self) -> f64 {
        self.sigma.sqrt()
    }
}

impl Cdf for GaussianLaw {
    fn cdf(&self, x: f64) -> f64 {
        if self.sigma > 0.0 {
            normal_cdf((x - self.a) / self.sd())
        } else if x >= self.a {
            1.0
        } else {
            0.0
        }
    }

    fn cdf_left(&self, x: f64) -> f64 {
        if self.sigma > 0.0 {
            self.cdf(x)
        } else if x > self.a {
            1.0
        } else {
            0.0
        }
    }
}

/// `e^{-κt}`.
pub fn mean_iid(kappa: f64, t: f64) -> f64 {
    (-kappa * t).exp()
}

/// `e^{lp} Σ_{m ≥ first} q^m / (m!)²` for `q ≥ 0`.
///
/// Summation starts at the largest term and walks outwards, so the result
/// stays representable when the sum itself would overflow before the
/// prefactor is applied.
fn scaled_bessel_series(q: f64, first: u64, log_prefactor: f64) -> f64 {
    if q == 0.0 {
        return if first == 0 { log_prefactor.exp() } else { 0.0 };
    }
    let peak = (q.sqrt().floor() as u64).max(first);
    let ln_q = q.ln();
    let log_peak = peak as f64 * ln_q - 2.0 * (2..=peak).map(|k| (k as f64).ln()).sum::<f64>();

    // Terms relative to the peak term.
    let mut sum = 1.0;
    let mut r = 1.0;
    let mut m = peak;
    loop {
        m += 1;
        r *= q / ((m * m) as f64);
        sum += r;
        if r < SERIES_CUTOFF * sum {
            break;
        }
    }
    let mut r = 1.0;
    let mut m = peak;
    while m > first {
        r *= ((m * m) as f64) / q;
        m -= 1;
        sum += r;
        if r < SERIES_CUTOFF * sum {
            break;
        }
    }

    let base = log_peak.exp();
    let pre = log_prefactor.exp();
    if base.is_normal() && pre.is_normal() && (base * sum).is_finite() {
        let value = pre * (base * sum);
        if value.is_normal() {
            return value;
        }
    }
    (log_prefactor + log_peak).exp() * sum
}

/// `σ(t) = e^{-2κt} Σ_{m≥1} (wt)^{2m}/(m!)²`.
pub fn var_iid(kappa: f64, w: f64, t: f64) -> f64 {
    let wt = w * t;
    scaled_bessel_series(wt * wt, 1, -2.0 * kappa * t)
}

/// Limit covariance `R(t,s) = Σ_{m≥0} (wt)^m (ws)^m/(m!)²` at `κ = 0`.
pub fn covariance_iid(w: f64, t: f64, s: f64) -> f64 {
    scaled_bessel_series((w * t) * (w * s), 0, 0.0)
}

/// `e^{-κt} ∫ e^{λt} ρ(λ) dλ` with the quadrature diagnostics.
pub fn mean_sym_detailed(kappa: f64, w: f64, t: f64) -> Converged {
    if t == 0.0 {
        return Converged {
            value: 1.0,
            nodes: 0,
            change: 0.0,
        };
    }
    // λ = 2w·x maps the semicircle onto the Chebyshev-U weight; the
    // normalisation 1/(2πw²) becomes 2/π.
    let c = gauss_chebyshev_u_adaptive(
        |x| ((2.0 * w * x - kappa) * t).exp(),
        8,
        SEMICIRCLE_TOL,
        f64::MIN_POSITIVE,
        SEMICIRCLE_MAX_NODES,
    );
    Converged {
        value: FRAC_2_PI * c.value,
        change: FRAC_2_PI * c.change,
        ..c
    }
}

/// Mean of the symmetric-ensemble limit law, `a_s(t) = e^{-κt} I₁(2wt)/(wt)`.
pub fn mean_sym(kappa: f64, w: f64, t: f64) -> f64 {
    mean_sym_detailed(kappa, w, t).value
}

/// Variance of the symmetric-ensemble limit law: the semicircle average of
/// `e^{2(λ−κ)t}` minus the squared mean.
pub fn var_sym(kappa: f64, w: f64, t: f64) -> f64 {
    let second = mean_sym(kappa, w, 2.0 * t);
    let mean = mean_sym(kappa, w, t);
    (second - mean * mean).max(0.0)
}

pub fn limit_law_iid(kappa: f64, w: f64, t: f64) -> GaussianLaw {
    GaussianLaw {
        a: mean_iid(kappa, t),
        sigma: var_iid(kappa, w, t),
    }
}

pub fn limit_law_sym(kappa: f64, w: f64, t: f64) -> GaussianLaw {
    GaussianLaw {
        a: mean_sym(kappa, w, t),
        sigma: var_sym(kappa, w, t),
    }
}

/// Law of `xi_scale·ξ + z_scale·z` with `ξ ~ xi`, `z ~ N(0,1)` independent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureLaw {
    pub xi_scale: f64,
    pub z_scale: f64,
    pub xi: IidInitial,
}

/// Limit law for random initial data.
///
/// Non-symmetric: `e^{-κt} ξ + w₀ √σ(t) z`. Symmetric: `a_s(t) ξ + w₀ √σ_s(t) z`.
/// Here `w₀ = √E{ξ²}`.
pub fn mixture_law(kappa: f64, w: f64, t: f64, xi: &InitialLaw, symmetric: bool) -> Result<MixtureLaw> {
    let xi = match xi {
        InitialLaw::Iid(law) => {
            law.validate()?;
            *law
        }
        InitialLaw::Ones => {
            return Err(Error::invalid(
                "initial_law",
                "mixture laws need i.i.d. random initial data",
            ))
        }
    };
    let w0 = xi.rms();
    let (xi_scale, variance) = if symmetric {
        (mean_sym(kappa, w, t), var_sym(kappa, w, t))
    } else {
        (mean_iid(kappa, t), var_iid(kappa, w, t))
    };
    Ok(MixtureLaw {
        xi_scale,
        z_scale: w0 * variance.sqrt(),
        xi,
    })
}

const LEGENDRE_NODES: usize = 64;
const MIXTURE_ABS_TOL: f64 = 1e-10;
const MIXTURE_MAX_PANELS: usize = 1 << 12;

impl MixtureLaw {
    pub fn mean(&self) -> f64 {
        self.xi_scale * self.xi.mean
    }

    pub fn variance(&self) -> f64 {
        let sd = self.xi_scale * self.xi.sd();
        sd * sd + self.z_scale * self.z_scale
    }

    /// Gaussian part evaluated at `x`, with the left limit when it is a step.
    fn smooth(&self, x: f64, left: bool) -> f64 {
        if self.z_scale > 0.0 {
            normal_cdf(x / self.z_scale)
        } else if x > 0.0 || (!left && x == 0.0) {
            1.0
        } else {
            0.0
        }
    }

    fn eval(&self, lambda: f64, left: bool) -> f64 {
        let loc = self.xi_scale * self.xi.mean;
        let spread = self.xi_scale * self.xi.sd();
        if spread == 0.0 {
            return self.smooth(lambda - loc, left);
        }
        match self.xi.family {
            Family::Gaussian => {
                let sd = self.variance().sqrt();
                normal_cdf((lambda - loc) / sd)
            }
            Family::Rademacher => {
                0.5 * (self.smooth(lambda - (loc + spread), left)
                    + self.smooth(lambda - (loc - spread), left))
            }
            Family::Uniform => {
                let half = spread.abs() * 3f64.sqrt();
                if self.z_scale == 0.0 {
                    return ((lambda - (loc - half)) / (2.0 * half)).clamp(0.0, 1.0);
                }
                self.uniform_convolution(lambda - loc, half)
            }
        }
    }

    /// `(1/2h) ∫_{-h}^{h} Φ((x − u)/z) du` by composite Gauss–Legendre with
    /// panel doubling.
    fn uniform_convolution(&self, x: f64, half: f64) -> f64 {
        let rule = gauss_legendre(LEGENDRE_NODES);
        let f = |u: f64| normal_cdf((x - u) / self.z_scale);
        let mut pieces = 1;
        let mut prev = composite_legendre(&rule, -half, half, pieces, f) / (2.0 * half);
        while pieces < MIXTURE_MAX_PANELS {
            pieces *= 2;
            let next = composite_legendre(&rule, -half, half, pieces, f) / (2.0 * half);
            if (next - prev).abs() <= MIXTURE_ABS_TOL {
                return next.clamp(0.0, 1.0);
            }
            prev = next;
        }
        prev.clamp(0.0, 1.0)
    }
}

impl Cdf for MixtureLaw {
    fn cdf(&self, x: f64) -> f64 {
        self.eval(x, false)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.eval(x, true)
    }
}

/// CDF of a mixture law at `lambda`.
pub fn mixture_cdf(law: &MixtureLaw, lambda: f64) -> f64 {
    law.cdf(lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    CriticallyStable,
    Unstable,
}

impl Stability {
    pub fn name(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::CriticallyStable => "critically_stable",
            Stability::Unstable => "unstable",
        }
    }
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    pub verdict: Stability,
    pub kappa_c: f64,
    /// `lim_{t→∞} σ(t)`: zero when stable or critical, `+∞` otherwise.
    pub sigma_limit: f64,
}

impl StabilityVerdict {
    /// Large-`t` behaviour of `σ(t)`.
    pub fn asymptotics(&self, kappa: f64) -> String {
        let w = self.kappa_c;
        match self.verdict {
            Stability::Stable => format!(
                "sigma(t) ~ exp(-{}t)/sqrt(4*pi*{}*t) -> 0",
                2.0 * (kappa - w),
                w
            ),
            Stability::CriticallyStable => format!("sigma(t) ~ 1/sqrt(4*pi*{w}*t) -> 0"),
            Stability::Unstable => format!(
                "sigma(t) ~ exp({}t)/sqrt(4*pi*{}*t) -> inf",
                2.0 * (w - kappa),
                w
            ),
        }
    }
}

/// Weak-stability classification of the non-symmetric dynamics: the
/// critical decay rate is `κ_c = w`, and `σ(t)` stays bounded iff `κ ≥ w`.
pub fn classify_stability(kappa: f64, w: f64) -> Result<StabilityVerdict> {
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::invalid("w", format!("must be positive, got {w}")));
    }
    if !kappa.is_finite() {
        return Err(Error::NonFinite("kappa"));
    }
    let verdict = if kappa > w {
        Stability::Stable
    } else if kappa == w {
        Stability::CriticallyStable
    } else {
        Stability::Unstable
    };
    Ok(StabilityVerdict {
        verdict,
        kappa_c: w,
        sigma_limit: if verdict == Stability::Unstable {
            f64::INFINITY
        } else {
            0.0
        },
    })
}
