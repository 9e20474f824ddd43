//! `complexdyn`: closed-form predictions, Monte Carlo verification runs,
//! stability classification and spectral diagnostics.
//!
//! Exit codes: 0 success, 1 a check failed (or `classify` found the system
//! unstable), 2 usage or config error, 3 runtime failure.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use complexdyn::ensembles::{Family, IidInitial, InitialLaw};
use complexdyn::harness::{self, ExperimentPlan};
use complexdyn::laws::{self, Stability};
use complexdyn::par::Execution;
use complexdyn::{report, Error};

/// Environment variable selecting the number of worker threads.
const WORKERS_ENV: &str = "COMPLEXDYN_WORKERS";

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "complexdyn", version, about = "Linear dynamics with random interactions")]
struct Cli {
    /// Master seed; overrides the config `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Iid,
    Sym,
}

#[derive(Subcommand)]
enum Command {
    /// Print the predicted limit law at each time as CSV.
    Predict {
        #[arg(long, value_enum, default_value = "iid")]
        mode: Mode,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        kappa: f64,
        #[arg(long, default_value_t = 1.0)]
        w: f64,
        /// Times, repeated or comma separated.
        #[arg(long = "t", required = true, value_delimiter = ',')]
        times: Vec<f64>,
        /// Family of random initial data; enables the mixture columns.
        #[arg(long)]
        xi_family: Option<Family>,
        #[arg(long, allow_negative_numbers = true)]
        xi_mean: Option<f64>,
        #[arg(long)]
        xi_second_moment: Option<f64>,
    },
    /// Run a Monte Carlo verification from a config file.
    Verify { config: PathBuf, out: PathBuf },
    /// Classify the stability of the non-symmetric dynamics.
    Classify {
        #[arg(long, allow_negative_numbers = true)]
        kappa: f64,
        #[arg(long, allow_negative_numbers = true)]
        w: f64,
    },
    /// Per-replica operator norms and, for symmetric ensembles, the eigenvalue histogram.
    Spectrum { config: PathBuf, out: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure { code: EXIT_RUNTIME, message: message.into() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Predict { mode, kappa, w, times, xi_family, xi_mean, xi_second_moment } => {
            predict(mode, kappa, w, &times, xi_family, xi_mean, xi_second_moment)
        }
        Command::Classify { kappa, w } => classify(kappa, w),
        Command::Verify { config, out } => with_workers(|| verify(&config, &out, cli.seed)),
        Command::Spectrum { config, out } => with_workers(|| spectrum(&config, &out, cli.seed)),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn with_workers(f: impl FnOnce() -> Result<u8, Failure> + Send) -> Result<u8, Failure> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return f();
    };
    let workers: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&k| k >= 1)
        .ok_or_else(|| Failure::usage(format!("{WORKERS_ENV} must be a positive integer, got {raw:?}")))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::runtime(format!("cannot start worker pool: {e}")))?;
    pool.install(f)
}

fn predict(
    mode: Mode,
    kappa: f64,
    w: f64,
    times: &[f64],
    xi_family: Option<Family>,
    xi_mean: Option<f64>,
    xi_second_moment: Option<f64>,
) -> Result<u8, Failure> {
    if !kappa.is_finite() {
        return Err(Failure::usage("--kappa must be finite"));
    }
    if !(w.is_finite() && w > 0.0) {
        return Err(Failure::usage(format!("--w must be positive, got {w}")));
    }
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Failure::usage(format!("--t must be finite and non-negative, got {t}")));
    }
    let xi = if xi_family.is_some() || xi_mean.is_some() || xi_second_moment.is_some() {
        let law = IidInitial::new(
            xi_family.unwrap_or(Family::Gaussian),
            xi_mean.unwrap_or(0.0),
            xi_second_moment.unwrap_or(1.0),
        )
        .map_err(|e| Failure::usage(e.to_string()))?;
        Some(InitialLaw::Iid(law))
    } else {
        None
    };
    let symmetric = matches!(mode, Mode::Sym);
    let mut out = String::from(if xi.is_some() { "t,a,sigma,xi_scale,z_scale\n" } else { "t,a,sigma\n" });
    for &t in times {
        let law = if symmetric {
            laws::limit_law_sym(kappa, w, t)
        } else {
            laws::limit_law_iid(kappa, w, t)
        };
        let _ = write!(out, "{},{},{}", t, law.a, law.sigma);
        if let Some(xi) = &xi {
            let m = laws::mixture_law(kappa, w, t, xi, symmetric).map_err(|e| Failure::usage(e.to_string()))?;
            let _ = write!(out, ",{},{}", m.xi_scale, m.z_scale);
        }
        out.push('\n');
    }
    print!("{out}");
    Ok(0)
}

fn classify(kappa: f64, w: f64) -> Result<u8, Failure> {
    let v = laws::classify_stability(kappa, w).map_err(|e| Failure::usage(e.to_string()))?;
    println!(
        "{} kappa_c={} {}",
        v.verdict.name(),
        v.kappa_c,
        v.asymptotics(kappa)
    );
    Ok(if v.verdict == Stability::Unstable { EXIT_FAIL } else { 0 })
}

fn load_plan(path: &Path, seed: Option<u64>) -> Result<(ExperimentPlan, String), Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut plan = config::parse(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    if let Some(seed) = seed {
        plan.master_seed = seed;
        plan.ensemble.seed = seed;
    }
    Ok((plan, text))
}

/// Map a library error to an exit code, naming the config line when the
/// error concerns a key.
fn classify_error(e: Error, path: &Path, text: &str) -> Failure {
    match &e {
        Error::Invalid { field, .. } => {
            let at = config::key_line(text, field).map(|l| format!(" (line {l})")).unwrap_or_default();
            Failure::usage(format!("{}{at}: {e}", path.display()))
        }
        _ => Failure::runtime(e.to_string()),
    }
}

fn incomplete(out: &Path, f: Failure) -> Failure {
    if f.code == EXIT_RUNTIME {
        if let Err(e) = report::write_incomplete(out, &f.message) {
            return Failure::runtime(format!("{}; could not write summary: {e}", f.message));
        }
    }
    f
}

fn verify(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<u8, Failure> {
    let (plan, text) = load_plan(config_path, seed)?;
    plan.validate().map_err(|e| classify_error(e, config_path, &text))?;
    let report = harness::run(&plan, Execution::Parallel)
        .map_err(|e| incomplete(out, classify_error(e, config_path, &text)))?;
    report::write_verification(&report, out)
        .map_err(|e| incomplete(out, Failure::runtime(format!("cannot write reports to {}: {e}", out.display()))))?;
    print!("{}", report::summary_text(&report));
    Ok(if report.passed() { 0 } else { EXIT_FAIL })
}

fn spectrum(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<u8, Failure> {
    let (plan, text) = load_plan(config_path, seed)?;
    plan.ensemble.validate().map_err(|e| classify_error(e, config_path, &text))?;
    let result = harness::spectrum(&plan, Execution::Parallel)
        .map_err(|e| incomplete(out, classify_error(e, config_path, &text)))?;
    report::write_spectrum(&result, out)
        .map_err(|e| incomplete(out, Failure::runtime(format!("cannot write reports to {}: {e}", out.display()))))?;
    let max = result.norms.iter().map(|r| r.norm).fold(f64::NAN, f64::max);
    println!("replicas: {} max norm: {max}", result.norms.len());
    if let Some(bulk) = result.bulk_fraction {
        println!("fraction of eigenvalues in [-w, w]: {bulk} ({} outside histogram)", result.outside);
    }
    Ok(0)
}
