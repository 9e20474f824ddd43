//! Empirical objects built from trajectory frames: the counting function
//! `N_n(λ,t)`, its Stieltjes transform, KS distances, and replica-level
//! moment estimators.
//!
//! Coordinates of one replica are exchangeable, so the law of `x₁(t)` is
//! estimated by pooling every coordinate of every replica. Coordinates
//! within a replica are correlated, so standard errors are computed from
//! per-replica statistics, never from the pooled sample count.
//!
//! Replica-level sums are taken over sorted per-replica values, which makes
//! every estimator bit-for-bit independent of replica order.

use num_complex::Complex64;

use crate::laws::Cdf;
use crate::propagator::TrajectoryFrame;
use crate::{Error, Result};

/// Sorted samples of one fixed time.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    samples: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Sort `samples`; NaN is rejected.
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("samples"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(EmpiricalMeasure { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn n_total(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn non_empty(&self) -> Result<()> {
        if self.samples.is_empty() {
            Err(Error::EmptyMeasure)
        } else {
            Ok(())
        }
    }

    /// `n^{-1} #{x_i ≤ λ}`.
    pub fn counting_function(&self, lambda: f64) -> Result<f64> {
        self.non_empty()?;
        let count = self.samples.partition_point(|&x| x <= lambda);
        Ok(count as f64 / self.samples.len() as f64)
    }

    /// `sup_λ |F_n(λ) − F(λ)|`.
    ///
    /// Between order statistics `F_n` is constant and `F` monotone, so the
    /// supremum is attained at a sample point, either as `F(x)` vs `F_n(x)`
    /// or as the left limits `F(x−)` vs `F_n(x−)`. Ties are grouped.
    pub fn ks_distance<C: Cdf + ?Sized>(&self, cdf: &C) -> Result<f64> {
        self.non_empty()?;
        let n = self.samples.len() as f64;
        let mut d: f64 = 0.0;
        let mut i = 0;
        while i < self.samples.len() {
            let x = self.samples[i];
            let mut j = i;
            while j < self.samples.len() && self.samples[j] == x {
                j += 1;
            }
            let below = i as f64 / n;
            let at = j as f64 / n;
            d = d.max((cdf.cdf_left(x) - below).abs());
            d = d.max((at - cdf.cdf(x)).abs());
            i = j;
        }
        Ok(d.min(1.0))
    }

    /// `g_n(z) = n^{-1} Σ 1/(x_i − z)` for `Im z ≠ 0`.
    pub fn stieltjes(&self, z: Complex64) -> Result<Complex64> {
        if z.im == 0.0 || !z.im.is_finite() || !z.re.is_finite() {
            return Err(Error::invalid("z", "Stieltjes transform needs a finite z off the real axis"));
        }
        self.non_empty()?;
        let sum: Complex64 = self
            .samples
            .iter()
            .map(|&x| (Complex64::new(x, 0.0) - z).inv())
            .sum();
        Ok(sum / self.samples.len() as f64)
    }

    pub fn mean(&self) -> Result<f64> {
        self.non_empty()?;
        Ok(self.samples.iter().sum::<f64>() / self.samples.len() as f64)
    }
}

/// Frames of `R` replicas on a shared time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaPanel {
    times: Vec<f64>,
    replicas: Vec<Vec<TrajectoryFrame>>,
}

impl ReplicaPanel {
    pub fn new(replicas: Vec<Vec<TrajectoryFrame>>) -> Result<Self> {
        let times: Vec<f64> = replicas
            .first()
            .ok_or_else(|| Error::InsufficientData("panel has no replicas".into()))?
            .iter()
            .map(|f| f.t)
            .collect();
        for r in &replicas {
            if r.len() != times.len() || r.iter().zip(&times).any(|(f, t)| f.t != *t) {
                return Err(Error::invalid("panel", "replicas do not share one time grid"));
            }
        }
        Ok(ReplicaPanel { times, replicas })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn replica_count(&self) -> usize {
        self.replicas.len()
    }

    pub fn replicas(&self) -> &[Vec<TrajectoryFrame>] {
        &self.replicas
    }

    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| s == t || (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .ok_or(Error::MissingTime(t))
    }

    /// Frames at `t` that did not overflow, plus the number excluded.
    pub fn valid_frames(&self, t: f64) -> Result<(Vec<&TrajectoryFrame>, usize)> {
        let k = self.time_index(t)?;
        let (ok, bad): (Vec<_>, Vec<_>) =
            self.replicas.iter().map(|r| &r[k]).partition(|f| !f.overflow);
        Ok((ok, bad.len()))
    }

    pub fn overflow_count(&self, t: f64) -> Result<usize> {
        Ok(self.valid_frames(t)?.1)
    }

    /// All valid coordinates at `t`, pooled.
    pub fn pooled_measure(&self, t: f64) -> Result<EmpiricalMeasure> {
        let (frames, _) = self.valid_frames(t)?;
        EmpiricalMeasure::new(frames.iter().flat_map(|f| f.x.iter().copied()).collect())
    }
}

/// Sum of values in sorted order.
fn ordered_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

/// Mean and standard error of per-replica statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicaEstimate {
    pub value: f64,
    /// `None` with fewer than two replicas.
    pub se: Option<f64>,
    pub replicas: usize,
}

impl ReplicaEstimate {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let r = values.len();
        if r == 0 {
            return Err(Error::InsufficientData("no valid replicas".into()));
        }
        let mean = ordered_sum(values.clone()) / r as f64;
        let se = (r >= 2).then(|| {
            let ss = ordered_sum(values.iter().map(|v| (v - mean).powi(2)).collect());
            (ss / (r - 1) as f64 / r as f64).sqrt()
        });
        Ok(ReplicaEstimate {
            value: mean,
            se,
            replicas: r,
        })
    }

    /// `|value − target| / se`, infinite when `se` is zero and the values differ.
    pub fn z_score(&self, target: f64) -> Option<f64> {
        self.se.map(|se| {
            let diff = (self.value - target).abs();
            if diff == 0.0 {
                0.0
            } else {
                diff / se
            }
        })
    }
}

/// Unbiased sample variance across replicas of `N_n(λ,t)`.
pub fn replica_variance_of_n(panel: &ReplicaPanel, lambda: f64, t: f64) -> Result<f64> {
    let (frames, _) = panel.valid_frames(t)?;
    if frames.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "replica variance needs at least 2 valid replicas at t = {t}, have {}",
            frames.len()
        )));
    }
    let values: Vec<f64> = frames
        .iter()
        .map(|f| f.x.iter().filter(|&&x| x <= lambda).count() as f64 / f.x.len() as f64)
        .collect();
    let r = values.len() as f64;
    let mean = ordered_sum(values.clone()) / r;
    Ok(ordered_sum(values.iter().map(|v| (v - mean).powi(2)).collect()) / (r - 1.0))
}

fn coordinate_mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// `R̂(t,s)`: average over replicas and coordinates of `x_i(t) x_i(s)`.
/// Replicas overflowed at either time are skipped.
pub fn covariance_estimate(panel: &ReplicaPanel, t: f64, s: f64) -> Result<ReplicaEstimate> {
    let kt = panel.time_index(t)?;
    let ks = panel.time_index(s)?;
    let values: Vec<f64> = panel
        .replicas
        .iter()
        .filter(|r| !r[kt].overflow && !r[ks].overflow)
        .map(|r| {
            let (a, b) = (&r[kt].x, &r[ks].x);
            a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
        })
        .collect();
    ReplicaEstimate::from_values(values)
}

pub fn empirical_covariance(panel: &ReplicaPanel, t: f64, s: f64) -> Result<f64> {
    if panel.replica_count() < 2 {
        return Err(Error::InsufficientData("covariance needs at least 2 replicas".into()));
    }
    Ok(covariance_estimate(panel, t, s)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledMoments {
    pub mean: f64,
    pub variance: f64,
    pub second_moment: f64,
    /// Number of pooled coordinates.
    pub n_effective: usize,
    /// Replicas excluded because their frame overflowed.
    pub excluded: usize,
    /// Replica-level standard errors; `None` with a single replica.
    pub mean_se: Option<f64>,
    pub variance_se: Option<f64>,
    pub second_moment_se: Option<f64>,
}

/// Pooled coordinate moments at `t`, excluding overflowed frames.
///
/// `variance` is the pooled second central moment about the pooled mean
/// (normalised by the sample count).
pub fn pooled_moments(panel: &ReplicaPanel, t: f64) -> Result<PooledMoments> {
    let (frames, excluded) = panel.valid_frames(t)?;
    if frames.is_empty() {
        return Err(Error::InsufficientData(format!(
            "all {excluded} frames at t = {t} overflowed"
        )));
    }
    let means = ReplicaEstimate::from_values(frames.iter().map(|f| coordinate_mean(&f.x)).collect())?;
    let k = panel.time_index(t)?;
    let seconds = covariance_estimate(panel, panel.times[k], panel.times[k])?;
    let m = means.value;
    let variances = ReplicaEstimate::from_values(
        frames
            .iter()
            .map(|f| f.x.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / f.x.len() as f64)
            .collect(),
    )?;
    Ok(PooledMoments {
        mean: m,
        variance: variances.value,
        second_moment: seconds.value,
        n_effective: frames.iter().map(|f| f.x.len()).sum(),
        excluded,
        mean_se: means.se,
        variance_se: variances.se,
        second_moment_se: seconds.se,
    })
}
