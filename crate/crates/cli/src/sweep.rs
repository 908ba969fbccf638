use std::path::{Path, PathBuf};

use mems_core::beam::l2_norm_sq;
use mems_core::io::{fmt_f64, write_text};
use mems_core::model_config::{validate_config, RawConfig, Validation};

use crate::simulate::{load, simulate_into, Outcome};
use crate::{SweepParam, EXIT_CONFIG, EXIT_FAILURE};

struct Run {
    label: String,
    value: f64,
    dir: PathBuf,
    validation: Validation,
}

fn param_name(p: SweepParam) -> &'static str {
    match p {
        SweepParam::V => "V",
        SweepParam::Delta => "delta",
        SweepParam::NX => "n_x",
    }
}

/// Parses one sweep value. `delta0/k` (or `delta0`) is resolved against the
/// base configuration's admissible step.
fn parse_value(param: SweepParam, token: &str, delta0: f64) -> Result<f64, String> {
    let t = token.trim();
    if param == SweepParam::Delta {
        if let Some(rest) = t.strip_prefix("delta0") {
            let rest = rest.trim();
            if rest.is_empty() {
                return Ok(delta0);
            }
            let k: f64 = rest
                .strip_prefix('/')
                .and_then(|k| k.trim().parse().ok())
                .ok_or_else(|| format!("cannot parse {t:?}"))?;
            if !(k > 0.0) {
                return Err(format!("divisor in {t:?} must be positive"));
            }
            return Ok(delta0 / k);
        }
    }
    let v: f64 = t.parse().map_err(|_| format!("cannot parse {t:?}"))?;
    if !v.is_finite() {
        return Err(format!("{t:?} is not finite"));
    }
    if param == SweepParam::NX && (v.fract() != 0.0 || v < 1.0) {
        return Err(format!("n_x must be a positive integer, got {t:?}"));
    }
    Ok(v)
}

fn with_value(base: &RawConfig, param: SweepParam, value: f64) -> RawConfig {
    let mut raw = base.clone();
    match param {
        SweepParam::V => raw.v = Some(value),
        SweepParam::Delta => raw.delta = Some(value),
        SweepParam::NX => raw.n_x = Some(value as i64),
    }
    raw
}

pub fn cmd_sweep(config: &Path, out: &Path, param: SweepParam, values: &[String], quiet: bool) -> u8 {
    if values.is_empty() {
        eprintln!("sweep needs at least one value");
        return EXIT_CONFIG;
    }
    let base = match load(config, quiet) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let raw = base.config.to_raw();
    let name = param_name(param);
    let mut runs = Vec::new();
    for (k, token) in values.iter().enumerate() {
        let value = match parse_value(param, token, base.scheme.delta0) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("bad sweep value: {e}");
                return EXIT_CONFIG;
            }
        };
        let validation = match validate_config(&with_value(&raw, param, value)) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("configuration error for {name} = {token}: {e}");
                return EXIT_CONFIG;
            }
        };
        runs.push(Run {
            label: token.trim().to_string(),
            value,
            dir: out.join(format!("run_{k:03}")),
            validation,
        });
    }

    let config_dir = config.parent().unwrap_or(Path::new("."));
    let outcomes: Vec<Result<Outcome, String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = runs
            .iter()
            .map(|r| {
                scope.spawn(move || simulate_into(&r.validation, config_dir, &r.dir, 0))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err("run panicked".into())))
            .collect()
    });

    let mut wtr = match csv::Writer::from_path(out.join("sweep.csv")) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("cannot write sweep.csv: {e}");
            return EXIT_FAILURE;
        }
    };
    let header = [
        "param", "label", "value", "status", "passed", "steps", "t_final", "E_total_final",
        "min_gap_final", "touchdown", "onset_t", "multiplier_mass_final",
        "multiplier_mass_max", "checks_failed", "dir",
    ];
    let mut rows = vec![header.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    let mut any_failed = false;
    for (r, o) in runs.iter().zip(&outcomes) {
        let dir = r.dir.display().to_string();
        let row = match o {
            Ok(o) => {
                let tr = &o.run.trace;
                let last = tr.steps.last().expect("initial row");
                let onset = tr.coincidence_onset.map(|n| fmt_f64(tr.steps[n].t));
                let mass_max = tr.steps.iter().map(|s| s.multiplier_mass).fold(0.0, f64::max);
                let failed = o.run.reports().iter().filter(|c| !c.passed).count();
                any_failed |= !o.success();
                vec![
                    name.to_string(),
                    r.label.clone(),
                    fmt_f64(r.value),
                    o.status.clone(),
                    o.success().to_string(),
                    (tr.steps.len() - 1).to_string(),
                    fmt_f64(last.t),
                    fmt_f64(last.energy.total),
                    fmt_f64(last.min_gap),
                    onset.is_some().to_string(),
                    onset.unwrap_or_default(),
                    fmt_f64(last.multiplier_mass),
                    fmt_f64(mass_max),
                    failed.to_string(),
                    dir,
                ]
            }
            Err(e) => {
                any_failed = true;
                let mut row = vec![name.to_string(), r.label.clone(), fmt_f64(r.value), e.clone()];
                row.push("false".into());
                row.extend(std::iter::repeat_n(String::new(), 9));
                row.push(dir);
                row
            }
        };
        rows.push(row);
    }
    for row in &rows {
        if let Err(e) = wtr.write_record(row) {
            eprintln!("cannot write sweep.csv: {e}");
            return EXIT_FAILURE;
        }
    }
    if let Err(e) = wtr.flush() {
        eprintln!("cannot write sweep.csv: {e}");
        return EXIT_FAILURE;
    }

    if !quiet {
        for row in &rows[1..] {
            println!(
                "{name} = {:<12} {:<40} min_gap {:<24} touchdown {}",
                row[1], row[3], row[8], row[9]
            );
        }
    }
    let report = trend_report(param, &runs, &outcomes);
    if !quiet {
        for line in &report {
            println!("{line}");
        }
    }
    let mut text = report.join("\n");
    text.push('\n');
    if let Err(e) = write_text(&out.join("sweep_report.txt"), &text) {
        eprintln!("{e}");
        return EXIT_FAILURE;
    }
    if any_failed {
        EXIT_FAILURE
    } else {
        0
    }
}

/// Informational summaries: monotonicity of the final gap for a V sweep and
/// successive distances for a delta sweep.
fn trend_report(param: SweepParam, runs: &[Run], outcomes: &[Result<Outcome, String>]) -> Vec<String> {
    let mut lines = Vec::new();
    let finals: Vec<_> = outcomes
        .iter()
        .map(|o| o.as_ref().ok().and_then(|o| o.final_state.clone()))
        .collect();
    match param {
        SweepParam::V => {
            let gaps: Option<Vec<(f64, f64)>> = runs
                .iter()
                .zip(&finals)
                .map(|(r, f)| f.as_ref().map(|s| (r.value, s.min())))
                .collect();
            if let Some(mut g) = gaps {
                g.sort_by(|a, b| a.0.total_cmp(&b.0));
                let monotone = g.windows(2).all(|w| w[1].1 <= w[0].1);
                lines.push(format!(
                    "final min(u) is {}non-increasing in V",
                    if monotone { "" } else { "NOT " }
                ));
            }
        }
        SweepParam::Delta => {
            for k in 1..runs.len() {
                if let (Some(a), Some(b)) = (&finals[k - 1], &finals[k]) {
                    if a.grid == b.grid {
                        let d: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
                        lines.push(format!(
                            "||u(delta = {}) - u(delta = {})||_2 = {:.6e}",
                            runs[k - 1].label,
                            runs[k].label,
                            l2_norm_sq(&a.grid, &d).sqrt()
                        ));
                    }
                }
            }
        }
        SweepParam::NX => {}
    }
    lines
}
