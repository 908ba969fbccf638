use std::cell::RefCell;
use std::io::Write;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use mems_core::beam::{h2_norm, l2_norm_sq, BeamGrid, BeamState};
use mems_core::electrostatics::electrostatic_energy;
use mems_core::io::{read_snapshot, write_snapshot, SnapshotData};
use mems_core::linalg::BandedSpd;
use mems_core::minimizing_movements::Scheme;
use mems_core::model_config::{validate_config, RawConfig};
use mems_core::obstacle::BoundQp;
use mems_core::transmission::bilinear_form;

fn scheme(v: f64, n_x: usize) -> Scheme {
    let text = format!(
        "L = 1.0\nH = 1.0\nd = 1.0\nbeta = 1.0\ntau = 0.5\na = 0.5\nV = {v}\nsigma2 = 2.0\n\
         n_x = {n_x}\nn_z_layer = 8\nn_eta_gap = 8\ndelta = 0.001\n"
    );
    Scheme::from_validation(&validate_config(&RawConfig::parse(&text).unwrap()).unwrap()).unwrap()
}

/// Clamped states built from a few smooth modes, kept above `-H`.
fn admissible(grid: BeamGrid, coeffs: &[f64]) -> BeamState {
    let l = grid.half_width;
    let mut s = BeamState::from_fn(grid, |x| {
        let b = (1.0 - (x / l).powi(2)).powi(2);
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * b * (k as f64 * std::f64::consts::PI * x / l).cos())
            .sum()
    });
    let lo = s.min();
    if lo < -0.9 {
        for v in &mut s.values {
            *v *= 0.9 / -lo;
        }
    }
    s
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

#[test]
fn force_stability_on_random_states() {
    let s = scheme(2.0, 32);
    let grid = s.grid();
    let worst = RefCell::new(0.0_f64);
    let strategy = (
        proptest::collection::vec(-0.4f64..0.4, 4),
        proptest::collection::vec(-1.0f64..1.0, 4),
    );
    runner(20)
        .run(&strategy, |(coeffs, dir)| {
            let u = admissible(grid, &coeffs);
            let raw = admissible(grid, &dir);
            let norm = h2_norm(&raw);
            prop_assume!(norm > 0.0);
            let du: Vec<f64> = raw.values.iter().map(|v| v * 1e-3 / norm).collect();
            let up = BeamState::new(grid, u.values.iter().zip(&du).map(|(a, b)| a + b).collect());
            let g0 = s.electrostatics.evaluate(&u).unwrap().force.values;
            let g1 = s.electrostatics.evaluate(&up).unwrap().force.values;
            let diff: Vec<f64> = g0.iter().zip(&g1).map(|(a, b)| a - b).collect();
            let c = l2_norm_sq(&grid, &diff).sqrt() / 1e-3;
            let mut w = worst.borrow_mut();
            *w = w.max(c);
            prop_assert!(c.is_finite() && c < 1e3, "C = {c}");
            Ok(())
        })
        .unwrap();
    let _ = writeln!(
        std::io::stdout().lock(),
        "force stability: ||g(u + du) - g(u)||_2 <= C ||du||_H2 with measured C = {:.3e} over 20 states",
        worst.into_inner()
    );
}

#[test]
fn energy_matches_the_assembled_operator() {
    let s = scheme(3.0, 24);
    let grid = s.grid();
    runner(12)
        .run(&proptest::collection::vec(-0.5f64..0.5, 3), |coeffs| {
            let u = admissible(grid, &coeffs);
            let sol = s.electrostatics.potential(&u).unwrap();
            let e = electrostatic_energy(&sol);
            let form = -0.5 * bilinear_form(&sol, &s.electrostatics.perm);
            prop_assert!((e - form).abs() <= 1e-10 * form.abs().max(1.0), "{e} vs {form}");
            Ok(())
        })
        .unwrap();
}

proptest! {
    #![proptest_config(Config { cases: 24, failure_persistence: None, ..Config::default() })]

    #[test]
    fn force_is_nonnegative(coeffs in proptest::collection::vec(-0.5f64..0.5, 3)) {
        let s = scheme(5.0, 16);
        let u = admissible(s.grid(), &coeffs);
        let ev = s.electrostatics.evaluate(&u).unwrap();
        prop_assert!(ev.force.values.iter().all(|g| *g >= 0.0));
    }

    #[test]
    fn bound_qp_satisfies_kkt(
        diag in proptest::collection::vec(1.0f64..4.0, 12),
        off in proptest::collection::vec(-0.4f64..0.4, 12),
        b in proptest::collection::vec(-3.0f64..3.0, 12),
    ) {
        let n = 12;
        let mut q = BandedSpd::zeros(n, 1);
        for i in 0..n {
            q.add(i, i, diag[i]);
            if i > 0 {
                q.add(i, i - 1, off[i]);
            }
        }
        let sol = BoundQp { q: &q, b: &b, lower: -0.5 }.solve(None, 100).unwrap();
        let qv = q.mul_vec(&sol.v);
        for i in 0..n {
            let r = qv[i] - b[i];
            prop_assert!(sol.v[i] >= -0.5);
            prop_assert!(r >= -1e-10, "reaction {r} at {i}");
            prop_assert!((r * (sol.v[i] + 0.5)).abs() <= 1e-10);
        }
    }

    #[test]
    fn step_is_feasible_and_decreasing(coeffs in proptest::collection::vec(-0.3f64..0.3, 3)) {
        let s = scheme(4.0, 16);
        let u = admissible(s.grid(), &coeffs);
        let step = s.step(&u, 1e-3).unwrap();
        prop_assert!(step.state.values.iter().all(|v| *v >= -1.0));
        prop_assert!(step.state.is_clamped());
        prop_assert!(step.decrease_excess <= 10.0 * s.numerical.tol_fp);
        prop_assert!(step.multiplier.iter().all(|z| *z <= s.numerical.tol_as));
    }

    #[test]
    fn snapshots_round_trip_bit_exactly(
        vals in proptest::collection::vec(-1.0f64..1.0, 9),
        zeta in proptest::collection::vec(-1e3f64..0.0, 9),
        t in 0.0f64..10.0,
    ) {
        let grid = BeamGrid::new(0.75, 8);
        let state = BeamState::new(grid, vals);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        write_snapshot(&path, &SnapshotData { index: 3, t, state: &state, multiplier: &zeta, potential: None }).unwrap();
        let back = read_snapshot(&path).unwrap();
        prop_assert_eq!(back.t.to_bits(), t.to_bits());
        prop_assert_eq!(back.state().values, state.values);
        prop_assert_eq!(back.multiplier, zeta);
    }

    #[test]
    fn config_round_trips_through_toml(v in 0.0f64..20.0, beta in 0.1f64..5.0, n_x in 8i64..128) {
        let text = format!("L = 1.0\nH = 0.5\nd = 2.0\nbeta = {beta}\nV = {v}\nn_x = {n_x}\n");
        let first = validate_config(&RawConfig::parse(&text).unwrap()).unwrap();
        let again = validate_config(&RawConfig::parse(&first.config.to_raw().to_toml()).unwrap()).unwrap();
        prop_assert_eq!(first.config, again.config);
        prop_assert_eq!(first.scheme, again.scheme);
    }
}
