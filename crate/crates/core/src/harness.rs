//! Replicated Monte Carlo experiments checking the limit theorems.
//!
//! Replica `r` of dimension `n` uses the system seed
//! `derive_seed(master_seed, [n, r])`, so replicas are independent and
//! reproducible on their own. Replicas run through [`par::map_indexed`] and
//! are folded in index order afterwards, so a report depends only on the
//! plan, never on the worker count.

use std::time::{Duration, Instant};

use crate::empirics::{
    covariance_estimate, pooled_moments, replica_variance_of_n, ReplicaEstimate, ReplicaPanel,
};
use crate::ensembles::{sample_initial, sample_matrix, EnsembleSpec, InitialLaw};
use crate::laws::{self, Cdf, GaussianLaw, MixtureLaw};
use crate::par::{self, Execution};
use crate::propagator::{self, evolve, SystemConfig, TrajectoryFrame, OVERFLOW_LIMIT};
use crate::rng::derive_seed;
use crate::{Error, Matrix, Result};

/// Relative tolerance of the power iteration used for norm checks.
pub const NORM_TOL: f64 = 1e-6;

/// Number of equal bins of the eigenvalue histogram.
pub const HISTOGRAM_BINS: usize = 64;

/// Minimum replicas for the self-averaging sweep and the norm tail check.
pub const MIN_REPLICAS_FOR_TAILS: usize = 30;

/// Self-averaging pairs whose predicted CDF lies outside this band are
/// degenerate (both variances are essentially zero) and excluded.
pub const DEGENERATE_CDF_BAND: (f64, f64) = (0.01, 0.99);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub ks_max: f64,
    pub variance_decay_min_factor: f64,
    /// Moment checks: `|empirical − predicted| ≤ moment_se_max · SE`.
    pub moment_se_max: f64,
    pub identity_se_max: f64,
    pub covariance_se_max: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            ks_max: 0.02,
            variance_decay_min_factor: 2.0,
            moment_se_max: 3.0,
            identity_se_max: 4.0,
            covariance_se_max: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormCheck {
    Off,
    /// Compute and report norms without affecting the verdict.
    #[default]
    Report,
    Enforce,
}

/// Which limit law a plan is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem {
    /// Non-symmetric ensemble, ones initial vector: `N(a(t), σ(t))`.
    Iid,
    /// Symmetric ensemble, ones initial vector: `N(a_s(t), σ_s(t))`.
    Symmetric,
    /// Random i.i.d. initial data: mixture law.
    RandomInitial,
}

impl Theorem {
    pub fn name(self) -> &'static str {
        match self {
            Theorem::Iid => "iid_gaussian",
            Theorem::Symmetric => "symmetric_gaussian",
            Theorem::RandomInitial => "random_initial_mixture",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    /// Template; its `seed` is ignored in favour of per-replica seeds.
    pub ensemble: EnsembleSpec,
    pub kappa: f64,
    pub times: Vec<f64>,
    /// Evaluation points of `N_n(λ,t)` for the sweep; empty means the
    /// predicted mean at each time.
    pub lambdas: Vec<f64>,
    pub replicas: usize,
    /// Dimensions of the self-averaging sweep; empty disables it.
    pub n_sweep: Vec<usize>,
    pub master_seed: u64,
    pub thresholds: Thresholds,
    pub tol: f64,
    /// Norm exceedance margin as a multiple of `w`.
    pub norm_eps: f64,
    pub norm_check: NormCheck,
    /// `(t, s)` pairs for the covariance-kernel check.
    pub covariance_pairs: Vec<(f64, f64)>,
}

impl ExperimentPlan {
    pub fn new(ensemble: EnsembleSpec, kappa: f64, times: Vec<f64>, replicas: usize) -> Self {
        ExperimentPlan {
            ensemble,
            kappa,
            times,
            lambdas: Vec::new(),
            replicas,
            n_sweep: Vec::new(),
            master_seed: ensemble.seed,
            thresholds: Thresholds::default(),
            tol: propagator::DEFAULT_TOL,
            norm_eps: 0.25,
            norm_check: NormCheck::Report,
            covariance_pairs: Vec::new(),
        }
    }

    pub fn theorem(&self) -> Theorem {
        match (self.ensemble.initial_law, self.ensemble.symmetric) {
            (InitialLaw::Iid(_), _) => Theorem::RandomInitial,
            (InitialLaw::Ones, false) => Theorem::Iid,
            (InitialLaw::Ones, true) => Theorem::Symmetric,
        }
    }

    pub fn w(&self) -> f64 {
        self.ensemble.entry_law.w
    }

    pub fn system_config(&self) -> Result<SystemConfig> {
        SystemConfig::with_tol(self.kappa, self.times.clone(), self.tol)
    }

    /// Largest time whose predicted magnitude `e^{(edge−κ)t}·n` stays below
    /// the overflow limit, where `edge` is the spectral edge of `A`
    /// (`w` for non-symmetric, `2w` for symmetric ensembles). `None` when
    /// the dynamics do not grow.
    pub fn time_cap(&self, n: usize) -> Option<f64> {
        let edge = if self.ensemble.symmetric { 2.0 } else { 1.0 } * self.w();
        let scale = match self.ensemble.initial_law {
            InitialLaw::Ones => 1.0,
            InitialLaw::Iid(law) => law.rms().max(1.0),
        };
        (self.kappa < edge)
            .then(|| (OVERFLOW_LIMIT.ln() - (n as f64 * scale).ln()) / (edge - self.kappa))
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        if self.replicas < 1 {
            return Err(Error::invalid("replicas", "must be at least 1"));
        }
        self.system_config()?;
        if self.n_sweep.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("n_sweep", "dimensions must be strictly increasing"));
        }
        if self.n_sweep.iter().any(|&n| n < 2) {
            return Err(Error::invalid("n_sweep", "dimensions must be at least 2"));
        }
        if !(self.norm_eps > 0.0 && self.norm_eps.is_finite()) {
            return Err(Error::invalid("norm_eps", "must be positive"));
        }
        let th = &self.thresholds;
        for (field, v) in [
            ("ks_max", th.ks_max),
            ("variance_decay_min_factor", th.variance_decay_min_factor),
            ("moment_se_max", th.moment_se_max),
            ("identity_se_max", th.identity_se_max),
            ("covariance_se_max", th.covariance_se_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(field, format!("must be positive, got {v}")));
            }
        }
        if self.lambdas.iter().any(|l| !l.is_finite()) {
            return Err(Error::invalid("lambdas", "must be finite"));
        }
        let largest_n = self.n_sweep.iter().copied().chain([self.ensemble.n]).max().unwrap_or(2);
        if let Some(cap) = self.time_cap(largest_n) {
            let t_max = self.times.last().copied().unwrap_or(0.0);
            if t_max > cap {
                return Err(Error::invalid(
                    "times",
                    format!(
                        "t = {t_max} exceeds the overflow cap t_max = {cap:.6} for kappa = {} \
                         below the spectral edge; the predicted growth e^((edge-kappa)t)*n \
                         would leave the representable range",
                        self.kappa
                    ),
                ));
            }
        }
        for &(t, s) in &self.covariance_pairs {
            if !(t >= 0.0 && s >= 0.0 && t.is_finite() && s.is_finite()) {
                return Err(Error::invalid("covariance_pairs", "times must be non-negative"));
            }
        }
        Ok(())
    }

    /// Seed of replica `r` at dimension `n`.
    pub fn replica_seed(&self, n: usize, r: usize) -> u64 {
        derive_seed(self.master_seed, &[n as u64, r as u64])
    }

    pub fn replica_spec(&self, n: usize, r: usize) -> EnsembleSpec {
        self.ensemble.with_n(n).with_seed(self.replica_seed(n, r))
    }
}

/// Predicted law of one coordinate at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    Gaussian(GaussianLaw),
    Mixture(MixtureLaw),
}

impl Prediction {
    pub fn mean(&self) -> f64 {
        match self {
            Prediction::Gaussian(g) => g.a,
            Prediction::Mixture(m) => m.mean(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Prediction::Gaussian(g) => g.sigma,
            Prediction::Mixture(m) => m.variance(),
        }
    }
}

impl Cdf for Prediction {
    fn cdf(&self, x: f64) -> f64 {
        match self {
            Prediction::Gaussian(g) => g.cdf(x),
            Prediction::Mixture(m) => m.cdf(x),
        }
    }

    fn cdf_left(&self, x: f64) -> f64 {
        match self {
            Prediction::Gaussian(g) => g.cdf_left(x),
            Prediction::Mixture(m) => m.cdf_left(x),
        }
    }
}

pub fn predict(plan: &ExperimentPlan, t: f64) -> Result<Prediction> {
    let (kappa, w) = (plan.kappa, plan.w());
    Ok(match plan.theorem() {
        Theorem::Iid => Prediction::Gaussian(laws::limit_law_iid(kappa, w, t)),
        Theorem::Symmetric => Prediction::Gaussian(laws::limit_law_sym(kappa, w, t)),
        Theorem::RandomInitial => Prediction::Mixture(laws::mixture_law(
            kappa,
            w,
            t,
            &plan.ensemble.initial_law,
            plan.ensemble.symmetric,
        )?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Every frame overflowed; nothing to compare.
    Unverifiable,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Unverifiable => "unverifiable",
        }
    }

    fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

/// Per-time comparison of the pooled coordinates with the predicted law.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeRow {
    pub t: f64,
    pub prediction: Prediction,
    pub mean: Option<ReplicaEstimate>,
    pub variance: Option<ReplicaEstimate>,
    pub ks: Option<f64>,
    pub n_effective: usize,
    pub overflow_frames: usize,
    pub ks_pass: bool,
    pub moments_pass: bool,
    pub status: Status,
}

/// `E{x₁²(t)}` against `E{x₁(2t)}` for symmetric ensembles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityRow {
    pub t: f64,
    pub second_moment: ReplicaEstimate,
    pub mean_at_double: ReplicaEstimate,
    pub combined_se: f64,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceRow {
    pub t: f64,
    pub s: f64,
    pub empirical: ReplicaEstimate,
    pub predicted: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub lambda: f64,
    pub t: f64,
    pub replicas: usize,
    pub variance: f64,
    pub degenerate: bool,
}

/// Comparison of the smallest and largest sweep dimension at one `(λ, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepVerdict {
    pub lambda: f64,
    pub t: f64,
    pub variance_small: f64,
    pub variance_large: f64,
    pub degenerate: bool,
    /// `None` for degenerate points.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub verdicts: Vec<SweepVerdict>,
    pub factor: f64,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass != Some(false))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormRow {
    pub replica: usize,
    /// NaN when the power iteration did not converge.
    pub norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormTail {
    pub eps: f64,
    pub threshold_2w: f64,
    pub threshold_4w: f64,
    pub count: usize,
    pub non_converged: usize,
    pub fraction_above_2w_plus_eps: f64,
    pub fraction_above_4w_plus_eps: f64,
    pub max_norm: f64,
    /// Symmetric ensembles must stay below `2w + ε`, non-symmetric below
    /// `4w + ε`. `None` when the check is not applicable (fewer than
    /// [`MIN_REPLICAS_FOR_TAILS`] replicas).
    pub pass: Option<bool>,
    pub rows: Vec<NormRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub theorem: Theorem,
    pub plan: ExperimentPlan,
    pub rows: Vec<TimeRow>,
    pub identities: Vec<IdentityRow>,
    pub covariances: Vec<CovarianceRow>,
    pub sweep: Option<SweepReport>,
    pub norms: Option<NormTail>,
    pub timings: Vec<(String, Duration)>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.status != Status::Fail)
            && self.identities.iter().all(|r| r.pass)
            && self.covariances.iter().all(|r| r.pass)
            && self.sweep.as_ref().is_none_or(SweepReport::passed)
            && (self.plan.norm_check != NormCheck::Enforce
                || self.norms.as_ref().is_none_or(|n| n.pass != Some(false)))
    }

    /// Number of time rows where every frame overflowed.
    pub fn unverifiable(&self) -> usize {
        self.rows.iter().filter(|r| r.status == Status::Unverifiable).count()
    }
}

/// Frames (and optionally operator norms) of every replica at dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub panel: ReplicaPanel,
    pub norms: Option<Vec<NormRow>>,
}

fn norm_row(replica: usize, a: &Matrix, seed: u64) -> Result<NormRow> {
    match propagator::operator_norm_seeded(a, NORM_TOL, seed) {
        Ok(norm) => Ok(NormRow {
            replica,
            norm,
            converged: true,
        }),
        Err(Error::NoConvergence { .. }) => Ok(NormRow {
            replica,
            norm: f64::NAN,
            converged: false,
        }),
        Err(e) => Err(e),
    }
}

/// Run every replica of `plan` at dimension `n`.
pub fn simulate(plan: &ExperimentPlan, n: usize, with_norms: bool, exec: Execution) -> Result<Simulation> {
    plan.validate()?;
    let cfg = plan.system_config()?;
    let outcomes: Vec<Result<(Vec<TrajectoryFrame>, Option<NormRow>)>> =
        par::map_indexed(plan.replicas, exec, |r| {
            let spec = plan.replica_spec(n, r);
            let a = sample_matrix(&spec)?;
            let x0 = sample_initial(&spec)?;
            let frames = evolve(&a, &x0, &cfg)?;
            let norm = if with_norms {
                Some(norm_row(r, &a, spec.seed)?)
            } else {
                None
            };
            Ok((frames, norm))
        });
    let mut replicas = Vec::with_capacity(outcomes.len());
    let mut norms = Vec::new();
    for outcome in outcomes {
        let (frames, norm) = outcome?;
        replicas.push(frames);
        norms.extend(norm);
    }
    Ok(Simulation {
        panel: ReplicaPanel::new(replicas)?,
        norms: with_norms.then_some(norms),
    })
}

fn time_rows(plan: &ExperimentPlan, panel: &ReplicaPanel) -> Result<Vec<TimeRow>> {
    let th = &plan.thresholds;
    panel
        .times()
        .iter()
        .map(|&t| {
            let prediction = predict(plan, t)?;
            let overflow_frames = panel.overflow_count(t)?;
            if overflow_frames == panel.replica_count() {
                return Ok(TimeRow {
                    t,
                    prediction,
                    mean: None,
                    variance: None,
                    ks: None,
                    n_effective: 0,
                    overflow_frames,
                    ks_pass: false,
                    moments_pass: false,
                    status: Status::Unverifiable,
                });
            }
            let moments = pooled_moments(panel, t)?;
            let mean = ReplicaEstimate {
                value: moments.mean,
                se: moments.mean_se,
                replicas: panel.replica_count() - overflow_frames,
            };
            let variance = ReplicaEstimate {
                value: moments.variance,
                se: moments.variance_se,
                ..mean
            };
            let ks = panel.pooled_measure(t)?.ks_distance(&prediction)?;
            let ks_pass = ks <= th.ks_max;
            let within = |e: &ReplicaEstimate, target: f64| {
                e.z_score(target).is_none_or(|z| z <= th.moment_se_max)
            };
            let moments_pass =
                within(&mean, prediction.mean()) && within(&variance, prediction.variance());
            Ok(TimeRow {
                t,
                prediction,
                mean: Some(mean),
                variance: Some(variance),
                ks: Some(ks),
                n_effective: moments.n_effective,
                overflow_frames,
                ks_pass,
                moments_pass,
                status: Status::from_bool(ks_pass && moments_pass),
            })
        })
        .collect()
}

/// `E{x₁²(t)} = E{x₁(2t)}` for every `t` whose double is on the grid.
pub fn identity_rows(panel: &ReplicaPanel, se_max: f64) -> Result<Vec<IdentityRow>> {
    let mut rows = Vec::new();
    for &t in panel.times() {
        if t == 0.0 || panel.time_index(2.0 * t).is_err() {
            continue;
        }
        let k1 = panel.time_index(t)?;
        let k2 = panel.time_index(2.0 * t)?;
        let ok: Vec<&Vec<TrajectoryFrame>> = panel
            .replicas()
            .iter()
            .filter(|r| !r[k1].overflow && !r[k2].overflow)
            .collect();
        if ok.len() < 2 {
            continue;
        }
        let second = ReplicaEstimate::from_values(
            ok.iter()
                .map(|r| r[k1].x.iter().map(|x| x * x).sum::<f64>() / r[k1].x.len() as f64)
                .collect(),
        )?;
        let mean2 = ReplicaEstimate::from_values(
            ok.iter()
                .map(|r| r[k2].x.iter().sum::<f64>() / r[k2].x.len() as f64)
                .collect(),
        )?;
        let combined_se = second.se.unwrap_or(0.0).hypot(mean2.se.unwrap_or(0.0));
        let residual = (second.value - mean2.value).abs();
        let pass = if combined_se > 0.0 {
            residual <= se_max * combined_se
        } else {
            residual <= 1e-12 * second.value.abs().max(1.0)
        };
        rows.push(IdentityRow {
            t,
            second_moment: second,
            mean_at_double: mean2,
            combined_se,
            residual,
            pass,
        });
    }
    Ok(rows)
}

/// Empirical `R̂(t,s)` against the limit kernel for each pair.
pub fn covariance_rows(
    panel: &ReplicaPanel,
    w: f64,
    pairs: &[(f64, f64)],
    se_max: f64,
) -> Result<Vec<CovarianceRow>> {
    pairs
        .iter()
        .map(|&(t, s)| {
            let empirical = covariance_estimate(panel, t, s)?;
            if empirical.replicas < 2 {
                return Err(Error::InsufficientData("covariance needs 2 replicas".into()));
            }
            let predicted = laws::covariance_iid(w, t, s);
            let pass = empirical.z_score(predicted).is_some_and(|z| z <= se_max);
            Ok(CovarianceRow {
                t,
                s,
                empirical,
                predicted,
                pass,
            })
        })
        .collect()
}

fn norm_tail(plan: &ExperimentPlan, rows: Vec<NormRow>) -> NormTail {
    let w = plan.w();
    let eps = plan.norm_eps * w;
    let threshold_2w = 2.0 * w + eps;
    let threshold_4w = 4.0 * w + eps;
    let converged: Vec<f64> = rows.iter().filter(|r| r.converged).map(|r| r.norm).collect();
    let count = converged.len();
    let frac = |thr: f64| {
        if count == 0 {
            f64::NAN
        } else {
            converged.iter().filter(|&&v| v > thr).count() as f64 / count as f64
        }
    };
    let above_2w = frac(threshold_2w);
    let above_4w = frac(threshold_4w);
    let exceeded = if plan.ensemble.symmetric { above_2w } else { above_4w };
    let pass = (rows.len() >= MIN_REPLICAS_FOR_TAILS && count > 0).then_some(exceeded == 0.0);
    NormTail {
        eps,
        threshold_2w,
        threshold_4w,
        count,
        non_converged: rows.len() - count,
        fraction_above_2w_plus_eps: above_2w,
        fraction_above_4w_plus_eps: above_4w,
        max_norm: converged.iter().copied().fold(f64::NAN, f64::max),
        pass,
        rows,
    }
}

/// Operator norms of every replica matrix and their exceedance fractions.
pub fn norm_tail_check(plan: &ExperimentPlan, exec: Execution) -> Result<NormTail> {
    plan.validate()?;
    if plan.replicas < MIN_REPLICAS_FOR_TAILS {
        return Err(Error::InsufficientData(format!(
            "norm tail check needs at least {MIN_REPLICAS_FOR_TAILS} replicas, have {}",
            plan.replicas
        )));
    }
    let n = plan.ensemble.n;
    let rows: Vec<Result<NormRow>> = par::map_indexed(plan.replicas, exec, |r| {
        let spec = plan.replica_spec(n, r);
        norm_row(r, &sample_matrix(&spec)?, spec.seed)
    });
    Ok(norm_tail(plan, rows.into_iter().collect::<Result<_>>()?))
}

/// Evaluation points `(λ, t)` for the self-averaging sweep.
fn sweep_points(plan: &ExperimentPlan) -> Result<Vec<(f64, f64)>> {
    let mut points = Vec::new();
    for &t in &plan.times {
        if plan.lambdas.is_empty() {
            points.push((predict(plan, t)?.mean(), t));
        } else {
            points.extend(plan.lambdas.iter().map(|&l| (l, t)));
        }
    }
    Ok(points)
}

/// Replica variance of `N_n(λ,t)` across `plan.n_sweep`.
pub fn self_averaging_sweep(plan: &ExperimentPlan, exec: Execution) -> Result<SweepReport> {
    plan.validate()?;
    if plan.n_sweep.len() < 2 {
        return Err(Error::invalid("n_sweep", "needs at least two dimensions"));
    }
    if plan.replicas < 2 {
        return Err(Error::InsufficientData(
            "replica variance is undefined with a single replica".into(),
        ));
    }
    if plan.replicas < MIN_REPLICAS_FOR_TAILS {
        return Err(Error::InsufficientData(format!(
            "self-averaging sweep needs at least {MIN_REPLICAS_FOR_TAILS} replicas per dimension, have {}",
            plan.replicas
        )));
    }
    let points = sweep_points(plan)?;
    let degenerate: Vec<bool> = points
        .iter()
        .map(|&(l, t)| {
            let f = predict(plan, t)?.cdf(l);
            Ok(!(DEGENERATE_CDF_BAND.0..=DEGENERATE_CDF_BAND.1).contains(&f))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &n in &plan.n_sweep {
        let sim = simulate(plan, n, false, exec)?;
        for (&(lambda, t), &deg) in points.iter().zip(&degenerate) {
            let (frames, _) = sim.panel.valid_frames(t)?;
            rows.push(SweepRow {
                n,
                lambda,
                t,
                replicas: frames.len(),
                variance: replica_variance_of_n(&sim.panel, lambda, t)?,
                degenerate: deg,
            });
        }
    }
    let k = points.len();
    let first = &rows[..k];
    let last = &rows[rows.len() - k..];
    let factor = plan.thresholds.variance_decay_min_factor;
    let verdicts = first
        .iter()
        .zip(last)
        .map(|(s, l)| SweepVerdict {
            lambda: s.lambda,
            t: s.t,
            variance_small: s.variance,
            variance_large: l.variance,
            degenerate: s.degenerate,
            pass: (!s.degenerate).then(|| l.variance <= s.variance / factor),
        })
        .collect();
    Ok(SweepReport {
        rows,
        verdicts,
        factor,
    })
}

fn timed<T>(timings: &mut Vec<(String, Duration)>, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    timings.push((stage.to_string(), start.elapsed()));
    Ok(out)
}

/// Simulate, compare every time against the predicted law, and run the
/// optional covariance, sweep and norm checks configured in `plan`.
pub fn run(plan: &ExperimentPlan, exec: Execution) -> Result<VerificationReport> {
    plan.validate()?;
    let theorem = plan.theorem();
    if !plan.covariance_pairs.is_empty() {
        if theorem != Theorem::Iid || plan.kappa != 0.0 {
            return Err(Error::invalid(
                "covariance_pairs",
                "the covariance kernel check needs a non-symmetric, ones-initial plan with kappa = 0",
            ));
        }
        for &(t, s) in &plan.covariance_pairs {
            for v in [t, s] {
                if !plan.times.contains(&v) {
                    return Err(Error::invalid(
                        "covariance_pairs",
                        format!("time {v} is not in times"),
                    ));
                }
            }
        }
    }
    let mut timings = Vec::new();
    let with_norms = plan.norm_check != NormCheck::Off;
    let sim = timed(&mut timings, "simulate", || {
        simulate(plan, plan.ensemble.n, with_norms, exec)
    })?;
    let (rows, identities, covariances) = timed(&mut timings, "analyze", || {
        let rows = time_rows(plan, &sim.panel)?;
        let identities = if theorem == Theorem::Symmetric {
            identity_rows(&sim.panel, plan.thresholds.identity_se_max)?
        } else {
            Vec::new()
        };
        let covariances = covariance_rows(
            &sim.panel,
            plan.w(),
            &plan.covariance_pairs,
            plan.thresholds.covariance_se_max,
        )?;
        Ok((rows, identities, covariances))
    })?;
    let sweep = if plan.n_sweep.is_empty() {
        None
    } else {
        Some(timed(&mut timings, "sweep", || self_averaging_sweep(plan, exec))?)
    };
    let norms = sim.norms.map(|rows| norm_tail(plan, rows));
    Ok(VerificationReport {
        theorem,
        plan: plan.clone(),
        rows,
        identities,
        covariances,
        sweep,
        norms,
        timings,
    })
}

fn require(plan: &ExperimentPlan, want: Theorem) -> Result<()> {
    if plan.theorem() == want {
        Ok(())
    } else {
        Err(Error::invalid(
            "mode",
            format!("plan is a {} plan, not {}", plan.theorem().name(), want.name()),
        ))
    }
}

/// Non-symmetric ensemble, ones initial vector.
pub fn run_theorem1(plan: &ExperimentPlan, exec: Execution) -> Result<VerificationReport> {
    require(plan, Theorem::Iid)?;
    run(plan, exec)
}

/// Symmetric ensemble, ones initial vector; adds the second-moment identity.
pub fn run_theorem2(plan: &ExperimentPlan, exec: Execution) -> Result<VerificationReport> {
    require(plan, Theorem::Symmetric)?;
    run(plan, exec)
}

/// Random initial data, either symmetry.
pub fn run_theorem4(plan: &ExperimentPlan, exec: Execution) -> Result<VerificationReport> {
    require(plan, Theorem::RandomInitial)?;
    run(plan, exec)
}

/// Simulate the covariance pairs' times and compare `R̂(t,s)` with the kernel.
pub fn covariance_check(
    plan: &ExperimentPlan,
    pairs: &[(f64, f64)],
    exec: Execution,
) -> Result<Vec<CovarianceRow>> {
    if plan.theorem() != Theorem::Iid || plan.kappa != 0.0 {
        return Err(Error::invalid(
            "covariance_pairs",
            "the covariance kernel check needs a non-symmetric, ones-initial plan with kappa = 0",
        ));
    }
    let mut times: Vec<f64> = pairs.iter().flat_map(|&(t, s)| [t, s]).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let plan = ExperimentPlan {
        times,
        ..plan.clone()
    };
    let sim = simulate(&plan, plan.ensemble.n, false, exec)?;
    if sim.panel.replica_count() < 2 {
        return Err(Error::InsufficientData("covariance needs at least 2 replicas".into()));
    }
    covariance_rows(&sim.panel, plan.w(), pairs, plan.thresholds.covariance_se_max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub norms: Vec<NormRow>,
    /// Pooled eigenvalue histogram on `[−2w−ε, 2w+ε]`; symmetric plans only.
    pub histogram: Option<Vec<HistogramBin>>,
    /// Eigenvalues outside the histogram range.
    pub outside: usize,
    /// Fraction of eigenvalues in `[−w, w]`.
    pub bulk_fraction: Option<f64>,
}

/// Operator norms of each replica matrix and, for symmetric ensembles, the
/// pooled eigenvalue histogram from a dense symmetric eigensolver.
pub fn spectrum(plan: &ExperimentPlan, exec: Execution) -> Result<SpectrumReport> {
    plan.ensemble.validate()?;
    if plan.replicas < 1 {
        return Err(Error::invalid("replicas", "must be at least 1"));
    }
    let n = plan.ensemble.n;
    let symmetric = plan.ensemble.symmetric;
    let per_replica: Vec<Result<(NormRow, Vec<f64>)>> = par::map_indexed(plan.replicas, exec, |r| {
        let spec = plan.replica_spec(n, r);
        let a = sample_matrix(&spec)?;
        let norm = norm_row(r, &a, spec.seed)?;
        let eig = if symmetric {
            let m = nalgebra::DMatrix::from_row_slice(n, n, a.as_slice());
            m.symmetric_eigenvalues().iter().copied().collect()
        } else {
            Vec::new()
        };
        Ok((norm, eig))
    });
    let mut norms = Vec::with_capacity(plan.replicas);
    let mut eigenvalues = Vec::new();
    for item in per_replica {
        let (norm, eig) = item?;
        norms.push(norm);
        eigenvalues.extend(eig);
    }
    if !symmetric {
        return Ok(SpectrumReport {
            norms,
            histogram: None,
            outside: 0,
            bulk_fraction: None,
        });
    }
    let w = plan.w();
    let half = 2.0 * w + plan.norm_eps * w;
    let width = 2.0 * half / HISTOGRAM_BINS as f64;
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|k| HistogramBin {
            left: -half + k as f64 * width,
            right: if k + 1 == HISTOGRAM_BINS {
                half
            } else {
                -half + (k + 1) as f64 * width
            },
            count: 0,
        })
        .collect();
    let mut outside = 0;
    for &ev in &eigenvalues {
        if !(-half..=half).contains(&ev) {
            outside += 1;
            continue;
        }
        let k = (((ev + half) / width) as usize).min(HISTOGRAM_BINS - 1);
        bins[k].count += 1;
    }
    let bulk = eigenvalues.iter().filter(|&&ev| ev.abs() <= w).count() as f64
        / eigenvalues.len() as f64;
    Ok(SpectrumReport {
        norms,
        histogram: Some(bins),
        outside,
        bulk_fraction: Some(bulk),
    })
}
