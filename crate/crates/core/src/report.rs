//! CSV and text emission for verification reports.
//!
//! Every CSV has one header row, comma separators and `\n` line endings.
//! Floats use Rust's shortest round-trip formatting, so values parse back
//! bit-for-bit. Empty fields mean "not applicable". Wall-clock timings only
//! appear in `summary.txt`, which keeps the CSVs byte-identical across runs.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::harness::{
    HistogramBin, NormRow, Prediction, SpectrumReport, Status, VerificationReport,
};

pub const REPORT_CSV: &str = "report.csv";
pub const SELFAVG_CSV: &str = "selfavg.csv";
pub const NORMS_CSV: &str = "norms.csv";
pub const IDENTITY_CSV: &str = "identity.csv";
pub const COVARIANCE_CSV: &str = "covariance.csv";
pub const HIST_CSV: &str = "hist.csv";
pub const SUMMARY_TXT: &str = "summary.txt";

pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn report_csv(report: &VerificationReport) -> String {
    let mut out = String::from(
        "t,predicted_mean,predicted_variance,xi_scale,z_scale,mean,mean_se,variance,variance_se,\
         ks,ks_max,n_effective,overflow_frames,status\n",
    );
    for r in &report.rows {
        let (xi, z) = match r.prediction {
            Prediction::Gaussian(_) => (None, None),
            Prediction::Mixture(m) => (Some(m.xi_scale), Some(m.z_scale)),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            num(r.t),
            num(r.prediction.mean()),
            num(r.prediction.variance()),
            opt(xi),
            opt(z),
            opt(r.mean.map(|e| e.value)),
            opt(r.mean.and_then(|e| e.se)),
            opt(r.variance.map(|e| e.value)),
            opt(r.variance.and_then(|e| e.se)),
            opt(r.ks),
            num(report.plan.thresholds.ks_max),
            r.n_effective,
            r.overflow_frames,
            r.status.name(),
        );
    }
    out
}

pub fn selfavg_csv(report: &VerificationReport) -> String {
    let mut out = String::from("n,lambda,t,replicas,variance,degenerate\n");
    if let Some(sweep) = &report.sweep {
        for r in &sweep.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n,
                num(r.lambda),
                num(r.t),
                r.replicas,
                num(r.variance),
                r.degenerate
            );
        }
    }
    out
}

pub fn norms_csv(rows: &[NormRow]) -> String {
    let mut out = String::from("replica,norm\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", r.replica, if r.converged { num(r.norm) } else { String::new() });
    }
    out
}

pub fn identity_csv(report: &VerificationReport) -> String {
    let mut out = String::from(
        "t,second_moment,second_moment_se,mean_at_2t,mean_at_2t_se,residual,combined_se,se_max,pass\n",
    );
    for r in &report.identities {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            num(r.t),
            num(r.second_moment.value),
            opt(r.second_moment.se),
            num(r.mean_at_double.value),
            opt(r.mean_at_double.se),
            num(r.residual),
            num(r.combined_se),
            num(report.plan.thresholds.identity_se_max),
            r.pass
        );
    }
    out
}

pub fn covariance_csv(report: &VerificationReport) -> String {
    let mut out = String::from("t,s,empirical,se,predicted,se_max,pass\n");
    for r in &report.covariances {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            num(r.t),
            num(r.s),
            num(r.empirical.value),
            opt(r.empirical.se),
            num(r.predicted),
            num(report.plan.thresholds.covariance_se_max),
            r.pass
        );
    }
    out
}

pub fn hist_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("bin_left,bin_right,count\n");
    for b in bins {
        let _ = writeln!(out, "{},{},{}", num(b.left), num(b.right), b.count);
    }
    out
}

/// Human-readable summary: every measured value sits next to its threshold.
pub fn summary_text(report: &VerificationReport) -> String {
    let plan = &report.plan;
    let th = &plan.thresholds;
    let mut s = String::new();
    let _ = writeln!(s, "verdict: {}", if report.passed() { "PASS" } else { "FAIL" });
    let _ = writeln!(s, "mode: {}", report.theorem.name());
    let _ = writeln!(
        s,
        "ensemble: n={} symmetric={} family={} w={} kappa={}",
        plan.ensemble.n,
        plan.ensemble.symmetric,
        plan.ensemble.entry_law.family.name(),
        plan.w(),
        plan.kappa
    );
    let _ = writeln!(s, "replicas: {} master_seed: {} tol: {:e}", plan.replicas, plan.master_seed, plan.tol);
    for r in &report.rows {
        match r.status {
            Status::Unverifiable => {
                let _ = writeln!(s, "t={}: unverifiable (all {} frames overflowed)", r.t, r.overflow_frames);
            }
            _ => {
                let _ = writeln!(
                    s,
                    "t={}: ks={:.6} (max {}) mean z={} variance z={} (max {}) -> {}",
                    r.t,
                    r.ks.unwrap_or(f64::NAN),
                    th.ks_max,
                    fmt_z(r.mean.and_then(|e| e.z_score(r.prediction.mean()))),
                    fmt_z(r.variance.and_then(|e| e.z_score(r.prediction.variance()))),
                    th.moment_se_max,
                    r.status.name()
                );
            }
        }
        if r.overflow_frames > 0 {
            let _ = writeln!(
                s,
                "t={}: excluded {} overflowed frame(s) from all statistics",
                r.t, r.overflow_frames
            );
        }
    }
    for r in &report.identities {
        let _ = writeln!(
            s,
            "identity t={}: |E x^2(t) - E x(2t)| = {:e} vs {} x {:e} -> {}",
            r.t,
            r.residual,
            th.identity_se_max,
            r.combined_se,
            pass_name(r.pass)
        );
    }
    for r in &report.covariances {
        let _ = writeln!(
            s,
            "covariance ({},{}): {} vs {} z={} (max {}) -> {}",
            r.t,
            r.s,
            r.empirical.value,
            r.predicted,
            fmt_z(r.empirical.z_score(r.predicted)),
            th.covariance_se_max,
            pass_name(r.pass)
        );
    }
    if let Some(sweep) = &report.sweep {
        for v in &sweep.verdicts {
            let outcome = match v.pass {
                None => "excluded (degenerate tail point)".to_string(),
                Some(p) => pass_name(p).to_string(),
            };
            let _ = writeln!(
                s,
                "self-averaging lambda={} t={}: var(n_min)={:e} var(n_max)={:e} factor {} -> {}",
                v.lambda, v.t, v.variance_small, v.variance_large, sweep.factor, outcome
            );
        }
    }
    if let Some(n) = &report.norms {
        let _ = writeln!(
            s,
            "norms: {} converged, {} not converged, max {}; above 2w+eps ({}) {}; above 4w+eps ({}) {} -> {}",
            n.count,
            n.non_converged,
            n.max_norm,
            n.threshold_2w,
            n.fraction_above_2w_plus_eps,
            n.threshold_4w,
            n.fraction_above_4w_plus_eps,
            match n.pass {
                None => "report only",
                Some(p) => pass_name(p),
            }
        );
    }
    for (stage, d) in &report.timings {
        let _ = writeln!(s, "time {stage}: {:.3}s", d.as_secs_f64());
    }
    s
}

fn fmt_z(z: Option<f64>) -> String {
    z.map(|z| format!("{z:.3}")).unwrap_or_else(|| "n/a".into())
}

fn pass_name(p: bool) -> &'static str {
    if p {
        "pass"
    } else {
        "fail"
    }
}

/// Write `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> io::Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, dir.join(name))
}

/// Write every report file of a verification run into `dir`.
pub fn write_verification(report: &VerificationReport, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_atomic(dir, REPORT_CSV, &report_csv(report))?;
    write_atomic(dir, SELFAVG_CSV, &selfavg_csv(report))?;
    let norms: &[NormRow] = report.norms.as_ref().map_or(&[], |n| &n.rows);
    write_atomic(dir, NORMS_CSV, &norms_csv(norms))?;
    write_atomic(dir, IDENTITY_CSV, &identity_csv(report))?;
    write_atomic(dir, COVARIANCE_CSV, &covariance_csv(report))?;
    write_atomic(dir, SUMMARY_TXT, &summary_text(report))
}

/// Summary for a run that stopped before producing a report.
pub fn write_incomplete(dir: &Path, reason: &str) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_atomic(dir, SUMMARY_TXT, &format!("{INCOMPLETE_MARKER}\nerror: {reason}\n"))
}

/// `norms.csv` and, for symmetric plans, `hist.csv`.
pub fn write_spectrum(report: &SpectrumReport, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_atomic(dir, NORMS_CSV, &norms_csv(&report.norms))?;
    if let Some(bins) = &report.histogram {
        write_atomic(dir, HIST_CSV, &hist_csv(bins))?;
    }
    Ok(())
}
