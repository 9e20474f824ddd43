mod common;

use common::{dense_apply, dense_expm, dense_mul, householder, rel_err};
use complexdyn::ensembles::{sample_initial, sample_matrix, EnsembleSpec, EntryLaw, Family, InitialLaw};
use complexdyn::propagator::*;
use complexdyn::Matrix;
use proptest::prelude::*;

fn spec(n: usize, symmetric: bool, w: f64, seed: u64) -> EnsembleSpec {
    EnsembleSpec {
        n,
        symmetric,
        entry_law: EntryLaw { family: Family::Gaussian, w },
        initial_law: InitialLaw::Ones,
        seed,
    }
}

#[test]
fn evolve_matches_dense_oracle_on_random_systems() {
    for case in 0..40u64 {
        let n = 3 + (case as usize % 8);
        let symmetric = case % 3 == 0;
        let w = 0.5 + (case % 5) as f64 * 0.4;
        let kappa = -0.5 + (case % 4) as f64 * 0.5;
        let s = spec(n, symmetric, w, 1000 + case);
        let a = sample_matrix(&s).unwrap();
        let x0: Vec<f64> = (0..n).map(|i| 1.0 - 0.3 * i as f64).collect();
        let times = vec![0.0, 0.4, 1.0, 2.5];
        let frames = evolve(&a, &x0, &SystemConfig::new(kappa, times.clone()).unwrap()).unwrap();
        for (frame, &t) in frames.iter().zip(&times) {
            let b: Vec<f64> = a.as_slice().iter().map(|v| v * t).collect();
            let mut want = dense_apply(&dense_expm(&b, n), &x0);
            want.iter_mut().for_each(|v| *v *= (-kappa * t).exp());
            assert!(rel_err(&frame.x, &want) < 1e-8, "case {case} t {t}");
            assert!(!frame.overflow);
        }
    }
}

#[test]
fn expm_action_on_8x8_matches_oracle() {
    let n = 8;
    let b = Matrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.45);
    let v: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
    let got = expm_action(&b, &v, 1.7, DEFAULT_TOL).unwrap();
    let scaled: Vec<f64> = b.as_slice().iter().map(|x| x * 1.7).collect();
    let want = dense_apply(&dense_expm(&scaled, n), &v);
    assert!(rel_err(&got, &want) < 1e-9);
}

#[test]
fn kappa_reduction_is_exact() {
    let s = spec(30, false, 1.0, 5);
    let a = sample_matrix(&s).unwrap();
    let x0 = sample_initial(&s).unwrap();
    let times = vec![0.5, 1.0, 2.0];
    let base = evolve(&a, &x0, &SystemConfig::new(0.0, times.clone()).unwrap()).unwrap();
    let damped = evolve(&a, &x0, &SystemConfig::new(0.7, times.clone()).unwrap()).unwrap();
    for (b, d) in base.iter().zip(&damped) {
        let f = (-0.7 * b.t).exp();
        for (x, y) in b.x.iter().zip(&d.x) {
            assert_eq!((x * f).to_bits(), y.to_bits());
        }
    }
}

#[test]
fn operator_norm_of_known_singular_values() {
    let n = 5;
    let u = householder(&[1.0, 2.0, -1.0, 0.5, 3.0]);
    let v = householder(&[-2.0, 1.0, 1.0, 4.0, 0.3]);
    let sv = [0.5, 5.0, 2.0, 1.0, 3.0];
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        d[i * n + i] = sv[i];
    }
    let m = dense_mul(&dense_mul(&u, &d, n), &v, n);
    let a = Matrix::from_row_major(n, n, m).unwrap();
    let norm = operator_norm(&a, 1e-10).unwrap();
    assert!((norm - 5.0).abs() < 1e-6, "{norm}");
}

#[test]
fn symmetric_norm_near_spectral_edge() {
    let a = sample_matrix(&spec(2000, true, 1.0, 77)).unwrap();
    let norm = operator_norm(&a, 1e-6).unwrap();
    assert!((1.9..=2.15).contains(&norm), "{norm}");
}

#[test]
fn overflow_is_flagged_and_sticky() {
    let a = Matrix::from_diagonal(&[10.0, 1.0]);
    let frames = evolve(&a, &[1.0, 1.0], &SystemConfig::new(0.0, vec![1.0, 40.0, 50.0]).unwrap()).unwrap();
    assert!(!frames[0].overflow);
    assert!(frames[1].overflow && frames[2].overflow);
    assert!(frames[1].x.iter().all(|v| v.is_nan()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn semigroup_property(seed in 0u64..10_000, t1 in 0.0..1.5f64, t2 in 0.0..1.5f64, n in 2usize..12) {
        let a = sample_matrix(&spec(n, false, 1.0, seed)).unwrap();
        let v: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.1).collect();
        let step = expm_action(&a, &expm_action(&a, &v, t1, DEFAULT_TOL).unwrap(), t2, DEFAULT_TOL).unwrap();
        let direct = expm_action(&a, &v, t1 + t2, DEFAULT_TOL).unwrap();
        prop_assert!(rel_err(&step, &direct) < 1e-8);
    }

    #[test]
    fn action_is_linear(seed in 0u64..10_000, alpha in -3.0..3.0f64, beta in -3.0..3.0f64, t in 0.0..2.0f64) {
        let n = 6;
        let a = sample_matrix(&spec(n, seed % 2 == 0, 1.0, seed)).unwrap();
        let u: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).cos()).collect();
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin() + 0.2).collect();
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| alpha * x + beta * y).collect();
        let lhs = expm_action(&a, &mix, t, DEFAULT_TOL).unwrap();
        let eu = expm_action(&a, &u, t, DEFAULT_TOL).unwrap();
        let ev = expm_action(&a, &v, t, DEFAULT_TOL).unwrap();
        let rhs: Vec<f64> = eu.iter().zip(&ev).map(|(x, y)| alpha * x + beta * y).collect();
        let scale = alpha.abs() + beta.abs() + 1e-3;
        let diff = lhs.iter().zip(&rhs).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-8 * scale * 10.0);
    }

    #[test]
    fn norm_estimate_never_exceeds_frobenius(seed in 0u64..10_000, n in 2usize..20) {
        let a = sample_matrix(&spec(n, false, 1.0, seed)).unwrap();
        let frob = a.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm = operator_norm(&a, 1e-8).unwrap();
        prop_assert!(norm <= frob * (1.0 + 1e-12));
        prop_assert!(norm > 0.0);
    }
}
