use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_complexdyn"));
    c.env_remove("COMPLEXDYN_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("plan.cfg");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn predict_at_zero_is_degenerate_unit_mass() {
    let o = run(&["predict", "--mode", "iid", "--kappa", "0", "--w", "1", "--t", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "t,a,sigma\n0,1,0\n");
}

#[test]
fn predict_columns_hold_bessel_values() {
    let o = run(&["predict", "--mode", "iid", "--t", "1"]);
    let line = stdout(&o).lines().nth(1).unwrap().to_string();
    let sigma: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
    assert!((sigma - 1.279_585_302_336_067).abs() < 1e-14);

    let o = run(&["predict", "--mode", "sym", "--t", "0.5,1"]);
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 3);
    let a: f64 = out.lines().nth(2).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((a - 1.590_636_854_637_329).abs() < 1e-13);
}

#[test]
fn predict_mixture_columns() {
    let o = run(&["predict", "--t", "1", "--xi-family", "rademacher", "--xi-second-moment", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("t,a,sigma,xi_scale,z_scale\n"));
    let cols: Vec<f64> = out.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(cols[3], 1.0);
    assert!((cols[4] - 2.0 * cols[2].sqrt()).abs() < 1e-15);
}

#[test]
fn predict_rejects_bad_arguments() {
    for args in [
        &["predict", "--w", "0", "--t", "1"][..],
        &["predict", "--t", "-1"],
        &["predict", "--t", "abc"],
        &["predict"],
        &["predict", "--t", "1", "--xi-mean", "2", "--xi-second-moment", "1"],
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!stderr(&o).is_empty());
    }
}

#[test]
fn classify_verdicts_and_exit_codes() {
    let o = run(&["classify", "--kappa", "2", "--w", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("stable "));
    let o = run(&["classify", "--kappa", "1", "--w", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("critically_stable "));
    let o = run(&["classify", "--kappa", "0.5", "--w", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("unstable "));
    assert!(stdout(&o).contains("kappa_c=1"));
    let o = run(&["classify", "--kappa", "0.5", "--w", "-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_rejects_zero_replicas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n = 10\ntimes = 1\nreplicas = 0\n");
    let o = run(&["verify", &cfg, dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("replicas"), "{}", stderr(&o));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn verify_refuses_times_beyond_overflow_cap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n = 100\nkappa = 0.2\ntimes = 1, 1000\nreplicas = 2\n");
    let o = run(&["verify", &cfg, dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("overflow cap"), "{}", stderr(&o));
}

#[test]
fn verify_rejects_unknown_keys_and_bad_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n = 10\nreplica = 3\n");
    let o = run(&["verify", &cfg, dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2: key `replica`: unknown key"));

    let cfg = write_config(dir.path(), "n = 10\ntimes = 1\nreplicas = 3\n");
    let o = bin()
        .args(["verify", &cfg, dir.path().to_str().unwrap()])
        .env("COMPLEXDYN_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["verify", dir.path().join("missing.cfg").to_str().unwrap(), "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_writes_reports_and_exit_reflects_checks() {
    let dir = tempfile::tempdir().unwrap();
    let text = "n = 300\ntimes = 0, 0.5, 1\nreplicas = 30\nn_sweep = 50, 300\nseed = 11\nks_max = 0.2\n";
    let cfg = write_config(dir.path(), text);
    let out = dir.path().join("out");
    let o = run(&["verify", &cfg, out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    for f in ["report.csv", "selfavg.csv", "norms.csv", "identity.csv", "covariance.csv", "summary.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let rep = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(rep.starts_with("t,predicted_mean,predicted_variance,"));
    assert_eq!(rep.lines().count(), 4);
    let first: Vec<&str> = rep.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[0], "0");
    // At t = 0 every coordinate is exactly 1, matching the point mass.
    assert_eq!(first[9], "0");
    assert_eq!(fs::read_to_string(out.join("norms.csv")).unwrap().lines().count(), 31);
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.starts_with("verdict: PASS"));
    assert!(summary.contains("master_seed: 11"));

    // An impossible KS threshold turns the verdict into a failed check.
    let cfg = write_config(dir.path(), &text.replace("ks_max = 0.2", "ks_max = 1e-9"));
    let o = run(&["verify", &cfg, out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn outputs_are_identical_across_worker_counts_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mode = sym\nn = 80\ntimes = 0.5, 1\nreplicas = 30\nseed = 3\nn_sweep = 40, 80\n",
    );
    let mut outputs = Vec::new();
    for workers in [None, Some("1"), Some("3")] {
        let out = dir.path().join(format!("out-{workers:?}"));
        let mut c = bin();
        c.args(["verify", &cfg, out.to_str().unwrap()]);
        if let Some(w) = workers {
            c.env("COMPLEXDYN_WORKERS", w);
        }
        let o = c.output().unwrap();
        assert!(matches!(o.status.code(), Some(0 | 1)));
        let files: Vec<String> = ["report.csv", "selfavg.csv", "norms.csv", "identity.csv"]
            .iter()
            .map(|f| fs::read_to_string(out.join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);

    let out = dir.path().join("reseeded");
    run(&["verify", &cfg, out.to_str().unwrap(), "--seed", "4"]);
    let other = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_ne!(other, outputs[0][0]);
    assert!(fs::read_to_string(out.join("summary.txt")).unwrap().contains("master_seed: 4"));
}

#[test]
fn spectrum_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n = 2\nreplicas = 1\nseed = 5\n");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&["spectrum", &cfg, a.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(run(&["spectrum", &cfg, b.to_str().unwrap()]).status.code(), Some(0));
    let norms = fs::read_to_string(a.join("norms.csv")).unwrap();
    assert_eq!(norms.lines().count(), 2);
    assert!(norms.starts_with("replica,norm\n0,"));
    assert_eq!(norms, fs::read_to_string(b.join("norms.csv")).unwrap());
    assert!(!a.join("hist.csv").exists());

    let cfg = write_config(dir.path(), "mode = sym\nn = 1000\nreplicas = 2\nseed = 5\n");
    let o = run(&["spectrum", &cfg, a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let hist = fs::read_to_string(a.join("hist.csv")).unwrap();
    assert!(hist.starts_with("bin_left,bin_right,count\n"));
    assert_eq!(hist.lines().count(), 65);
    let total: usize = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 2000);
    let left: f64 = hist.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert_eq!(left, -2.25);

    let cfg = write_config(dir.path(), "n = 10\nreplicas = 0\n");
    assert_eq!(run(&["spectrum", &cfg, a.to_str().unwrap()]).status.code(), Some(2));
}
