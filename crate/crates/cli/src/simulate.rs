use std::path::{Path, PathBuf};

use serde::Serialize;

use mems_core::beam::BeamState;
use mems_core::diagnostics::{run_checked, summarize, CheckReport, CheckedRun};
use mems_core::io::{
    initial_state, inventory, unix_time, write_json, write_snapshot, write_trace_csv,
    CheckRollup, CoincidenceOnset, IoError, RunManifest, SnapshotData, VERSION,
};
use mems_core::minimizing_movements::{RunOptions, Scheme, SchemeConstants};
use mems_core::model_config::{load_and_validate, Validation};

use crate::{EXIT_CONFIG, EXIT_FAILURE};

pub fn load(config: &Path, quiet: bool) -> Result<Validation, u8> {
    match load_and_validate(config) {
        Ok(v) => {
            if !quiet {
                for w in &v.warnings {
                    eprintln!("warning: {w}");
                }
            }
            Ok(v)
        }
        Err(e) => {
            eprintln!("configuration error in {}: {e}", config.display());
            Err(EXIT_CONFIG)
        }
    }
}

pub fn cmd_validate(config: &Path, quiet: bool) -> u8 {
    let v = match load(config, quiet) {
        Ok(v) => v,
        Err(code) => return code,
    };
    if !quiet {
        println!("{}: valid", config.display());
        println!("c1 = {:e}, delta0 = {:e}", v.scheme.c1, v.scheme.delta0);
        println!(
            "m1 = {:e}, m2 = {:e}, m3 = {:e} on w in [-H, {}]",
            v.scheme.m.m1, v.scheme.m.m2, v.scheme.m.m3, v.scheme.m.w_max
        );
        for d in &v.defaulted {
            println!("default: {d}");
        }
    }
    0
}

#[derive(Serialize)]
struct DiagnosticsSummary<'a> {
    status: &'a str,
    constants: SchemeConstants,
    checks: Vec<CheckReport>,
    failures: Vec<CheckReport>,
    coincidence_onset: Option<CoincidenceOnset>,
    max_stationarity: f64,
    max_backtrack_steps: usize,
    fallback_steps: usize,
    warnings: &'a [String],
}

/// Result of one simulation written to `out`.
pub struct Outcome {
    pub run: CheckedRun,
    pub status: String,
    pub final_state: Option<BeamState>,
}

impl Outcome {
    pub fn success(&self) -> bool {
        self.run.passed()
    }
}

fn snapshot_path(out: &Path, index: usize) -> PathBuf {
    out.join("snapshots").join(format!("snap_{index:06}.json"))
}

/// Runs the scheme described by `v` and writes everything into `out`.
pub fn simulate_into(
    v: &Validation,
    config_dir: &Path,
    out: &Path,
    snapshot_every: usize,
) -> Result<Outcome, String> {
    let started = unix_time();
    let scheme = Scheme::from_validation(v).map_err(|e| e.to_string())?;
    let u0 = initial_state(&v.config, config_dir).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;

    let initial = scheme.evaluate(&u0).map_err(|e| e.to_string())?;
    let zeros = vec![0.0; u0.values.len()];
    write_snapshot(
        &snapshot_path(out, 0),
        &SnapshotData {
            index: 0,
            t: 0.0,
            state: &u0,
            multiplier: &zeros,
            potential: Some(&initial.field.solution),
        },
    )
    .map_err(|e| e.to_string())?;

    let num = v.config.numerical;
    let mut write_error: Option<IoError> = None;
    let mut last_written = 0;
    let mut last_step = None;
    let run = run_checked(
        &scheme,
        &u0,
        num.delta,
        num.t_end,
        &RunOptions::default(),
        |n, step| {
            if snapshot_every > 0 && n % snapshot_every == 0 && write_error.is_none() {
                let r = write_snapshot(
                    &snapshot_path(out, n),
                    &SnapshotData {
                        index: n,
                        t: n as f64 * num.delta,
                        state: &step.state,
                        multiplier: &step.multiplier,
                        potential: Some(&step.evaluated.field.solution),
                    },
                );
                if let Err(e) = r {
                    write_error = Some(e);
                }
                last_written = n;
            }
            last_step = Some((n, step.state.clone(), step.multiplier.clone(), step.evaluated.field.solution.clone()));
        },
    );
    if let Some((n, state, zeta, sol)) = &last_step {
        if *n != last_written {
            write_snapshot(
                &snapshot_path(out, *n),
                &SnapshotData {
                    index: *n,
                    t: *n as f64 * num.delta,
                    state,
                    multiplier: zeta,
                    potential: Some(sol),
                },
            )
            .map_err(|e| e.to_string())?;
        }
    }
    if let Some(e) = write_error {
        return Err(e.to_string());
    }
    write_trace_csv(&out.join("trace.csv"), &run.trace).map_err(|e| e.to_string())?;

    let status = match &run.failure {
        Some((step, e)) => format!("failed at step {step}: {e}"),
        None if run.passed() => "completed".to_string(),
        None => "completed with failed checks".to_string(),
    };
    let onset = run.trace.coincidence_onset.map(|step| CoincidenceOnset {
        step,
        t: run.trace.steps[step].t,
    });
    let reports = run.reports();
    let steps = &run.trace.steps;
    let summary = DiagnosticsSummary {
        status: &status,
        constants: run.trace.constants,
        checks: summarize(&reports),
        failures: reports.iter().filter(|r| !r.passed).take(100).cloned().collect(),
        coincidence_onset: onset.clone(),
        max_stationarity: steps.iter().map(|s| s.stationarity).fold(0.0, f64::max),
        max_backtrack_steps: steps.iter().filter(|s| s.backtrack < 1.0).count(),
        fallback_steps: steps.iter().filter(|s| s.used_fallback).count(),
        warnings: &run.trace.warnings,
    };
    write_json(&out.join("diagnostics.json"), &summary).map_err(|e| e.to_string())?;

    let mut files = inventory(out).map_err(|e| e.to_string())?;
    files.push("manifest.json".into());
    files.sort();
    files.dedup();
    let manifest = RunManifest {
        config: v.config.to_raw(),
        version: VERSION.to_string(),
        started,
        finished: unix_time(),
        status: status.clone(),
        files,
        checks: CheckRollup::from_reports(&reports),
        coincidence_onset: onset,
        delta: num.delta,
        delta0: v.scheme.delta0,
        c1: v.scheme.c1,
        steps: run.trace.steps.len() - 1,
        warnings: merged_warnings(&v.warnings, &run.trace.warnings),
    };
    write_json(&out.join("manifest.json"), &manifest).map_err(|e| e.to_string())?;
    let final_state = last_step.map(|(_, s, _, _)| s).or(Some(u0));
    Ok(Outcome {
        run,
        status,
        final_state,
    })
}

/// Configuration warnings followed by run warnings, dropping run warnings
/// about a topic (the text before the first `=`) already raised.
fn merged_warnings(config: &[String], run: &[String]) -> Vec<String> {
    let topic = |w: &String| w.split('=').next().unwrap_or("").trim().to_string();
    let seen: Vec<String> = config.iter().map(topic).collect();
    config
        .iter()
        .chain(run.iter().filter(|w| !seen.contains(&topic(w))))
        .cloned()
        .collect()
}

pub fn cmd_simulate(config: &Path, out: &Path, snapshot_every: Option<usize>, quiet: bool) -> u8 {
    let mut v = match load(config, quiet) {
        Ok(v) => v,
        Err(code) => return code,
    };
    if let Some(k) = snapshot_every {
        v.config.snapshot_every = k;
    }
    let dir = config.parent().unwrap_or(Path::new("."));
    let outcome = match simulate_into(&v, dir, out, v.config.snapshot_every) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return if out.join("trace.csv").exists() {
                EXIT_FAILURE
            } else {
                EXIT_CONFIG
            };
        }
    };
    if !quiet {
        let tr = &outcome.run.trace;
        let last = tr.steps.last().expect("initial row");
        println!("{}: {} steps, t = {}", outcome.status, tr.steps.len() - 1, last.t);
        println!(
            "E_total {:.10e} -> {:.10e}, min gap {:.6e}, coincidence nodes {}",
            tr.steps[0].energy.total, last.energy.total, last.min_gap, last.coincidence_count
        );
        if let Some(n) = tr.coincidence_onset {
            println!("coincidence onset at step {n} (t = {})", tr.steps[n].t);
        }
        for r in summarize(&outcome.run.reports()) {
            println!(
                "{:<24} {:<4} measured {:>12.4e} bound {:>12.4e} tol {:>9.2e}  {}",
                r.name,
                if r.passed { "pass" } else { "FAIL" },
                r.measured,
                r.bound,
                r.tolerance,
                r.context
            );
        }
        println!("output in {}", out.display());
    }
    if outcome.success() {
        0
    } else {
        EXIT_FAILURE
    }
}
