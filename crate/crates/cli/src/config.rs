//! Flat `key = value` experiment configs.
//!
//! ```text
//! # iid gaussian, desk scale
//! mode = iid
//! n = 2000
//! times = 0.5, 1, 2
//! replicas = 100
//! seed = 42
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use complexdyn::ensembles::{EnsembleSpec, EntryLaw, Family, IidInitial, InitialLaw};
use complexdyn::harness::{ExperimentPlan, NormCheck};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: key `{}`: {}", self.key, self.reason),
            None => write!(f, "key `{}`: {}", self.key, self.reason),
        }
    }
}

impl std::error::Error for ConfigError {}

const KEYS: &[&str] = &[
    "mode",
    "n",
    "entry_family",
    "w",
    "initial",
    "xi_family",
    "xi_mean",
    "xi_second_moment",
    "kappa",
    "times",
    "lambdas",
    "replicas",
    "n_sweep",
    "seed",
    "tol",
    "ks_max",
    "variance_decay_min_factor",
    "moment_se_max",
    "identity_se_max",
    "covariance_se_max",
    "covariance_pairs",
    "norm_eps",
    "norm_check",
];

struct Entries {
    values: BTreeMap<&'static str, (usize, String)>,
}

impl Entries {
    fn err(&self, key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.values.get(key).map(|(l, _)| *l),
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(_, v)| v.as_str())
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| self.err(key, format!("cannot parse {v:?}: {e}"))))
            .transpose()
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.parse(key)?.ok_or_else(|| self.err(key, "required key is missing"))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let Some(raw) = self.raw(key) else {
            return Ok(None);
        };
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|v| v.parse::<T>().map_err(|e| self.err(key, format!("cannot parse {v:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut values = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(ConfigError {
                line: Some(lineno),
                key: content.to_string(),
                reason: "expected `key = value`".into(),
            });
        };
        let k = k.trim();
        let Some(&key) = KEYS.iter().find(|&&known| known == k) else {
            return Err(ConfigError {
                line: Some(lineno),
                key: k.to_string(),
                reason: "unknown key".into(),
            });
        };
        if let Some((first, _)) = values.insert(key, (lineno, v.trim().to_string())) {
            return Err(ConfigError {
                line: Some(lineno),
                key: key.to_string(),
                reason: format!("duplicate key (first set on line {first})"),
            });
        }
    }
    Ok(Entries { values })
}

fn family(e: &Entries, key: &str) -> Result<Option<Family>, ConfigError> {
    e.raw(key)
        .map(|v| v.parse::<Family>().map_err(|err| e.err(key, err.to_string())))
        .transpose()
}

fn pair(e: &Entries, raw: &str) -> Result<(f64, f64), ConfigError> {
    let bad = || e.err("covariance_pairs", format!("expected `t:s`, got {raw:?}"));
    let (t, s) = raw.split_once(':').ok_or_else(bad)?;
    Ok((t.trim().parse().map_err(|_| bad())?, s.trim().parse().map_err(|_| bad())?))
}

/// Parse a config document into an experiment plan. Only the syntax and
/// per-key ranges are checked here; `ExperimentPlan::validate` does the rest.
pub fn parse(text: &str) -> Result<ExperimentPlan, ConfigError> {
    let e = tokenize(text)?;
    let symmetric = match e.raw("mode").unwrap_or("iid") {
        "iid" => false,
        "sym" => true,
        other => return Err(e.err("mode", format!("expected iid or sym, got {other:?}"))),
    };
    let xi_keys = ["xi_family", "xi_mean", "xi_second_moment"];
    let initial_law = match e.raw("initial").unwrap_or("ones") {
        "ones" => {
            if let Some(k) = xi_keys.iter().find(|k| e.raw(k).is_some()) {
                return Err(e.err(k, "only allowed with initial = iid"));
            }
            InitialLaw::Ones
        }
        "iid" => {
            let fam = family(&e, "xi_family")?.unwrap_or(Family::Gaussian);
            let mean: f64 = e.parse("xi_mean")?.unwrap_or(0.0);
            let second: f64 = e.parse("xi_second_moment")?.unwrap_or(1.0);
            let law = IidInitial::new(fam, mean, second)
                .map_err(|err| e.err("xi_second_moment", err.to_string()))?;
            InitialLaw::Iid(law)
        }
        other => return Err(e.err("initial", format!("expected ones or iid, got {other:?}"))),
    };
    let w: f64 = e.parse("w")?.unwrap_or(1.0);
    let entry_law = EntryLaw {
        family: family(&e, "entry_family")?.unwrap_or(Family::Gaussian),
        w,
    };
    let seed: u64 = e.parse("seed")?.unwrap_or(0);
    let ensemble = EnsembleSpec {
        n: e.required("n")?,
        symmetric,
        entry_law,
        initial_law,
        seed,
    };
    let times = e.list::<f64>("times")?.unwrap_or_default();
    let replicas = e.required("replicas")?;
    let mut plan = ExperimentPlan::new(ensemble, e.parse("kappa")?.unwrap_or(0.0), times, replicas);
    plan.master_seed = seed;
    plan.lambdas = e.list("lambdas")?.unwrap_or_default();
    plan.n_sweep = e.list("n_sweep")?.unwrap_or_default();
    if let Some(tol) = e.parse("tol")? {
        plan.tol = tol;
    }
    let th = &mut plan.thresholds;
    for (key, slot) in [
        ("ks_max", &mut th.ks_max),
        ("variance_decay_min_factor", &mut th.variance_decay_min_factor),
        ("moment_se_max", &mut th.moment_se_max),
        ("identity_se_max", &mut th.identity_se_max),
        ("covariance_se_max", &mut th.covariance_se_max),
    ] {
        if let Some(v) = e.parse(key)? {
            *slot = v;
        }
    }
    if let Some(eps) = e.parse("norm_eps")? {
        plan.norm_eps = eps;
    }
    plan.norm_check = match e.raw("norm_check").unwrap_or("report") {
        "off" => NormCheck::Off,
        "report" => NormCheck::Report,
        "enforce" => NormCheck::Enforce,
        other => return Err(e.err("norm_check", format!("expected off, report or enforce, got {other:?}"))),
    };
    if let Some(raw) = e.raw("covariance_pairs") {
        plan.covariance_pairs = raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|p| pair(&e, p))
            .collect::<Result<_, _>>()?;
    }
    Ok(plan)
}

/// Line on which `key` is set, for attaching locations to validation errors.
pub fn key_line(text: &str, key: &str) -> Option<usize> {
    tokenize(text).ok()?.values.get(key).map(|(l, _)| *l)
}
