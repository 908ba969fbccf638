//! Persistence: trace CSV, snapshot JSON, run manifest, initial-state tables.
//!
//! Floating-point output uses 17 significant digits so every value read back
//! is bit-identical to the one written.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam::{BeamGrid, BeamState};
use crate::diagnostics::CheckReport;
use crate::minimizing_movements::SimulationTrace;
use crate::model_config::{InitialCondition, RawConfig, ValidatedConfig};
use crate::transmission::PotentialSolution;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("initial state: {0}")]
    Initial(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

/// 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON number with 17 significant digits; non-finite values become `null`.
fn json_num(x: f64) -> String {
    if x.is_finite() {
        fmt_f64(x)
    } else {
        "null".into()
    }
}

fn json_array(xs: impl IntoIterator<Item = f64>) -> String {
    let items: Vec<String> = xs.into_iter().map(json_num).collect();
    format!("[{}]", items.join(","))
}

pub const TRACE_COLUMNS: [&str; 10] = [
    "t",
    "E_m",
    "E_e",
    "E_total",
    "dissipation_step",
    "dissipation_cum",
    "min_gap",
    "coincidence_count",
    "multiplier_mass",
    "fp_iters",
];

pub fn trace_csv(trace: &SimulationTrace) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_COLUMNS).expect("in-memory write");
    for s in &trace.steps {
        w.write_record([
            fmt_f64(s.t),
            fmt_f64(s.energy.mechanical),
            fmt_f64(s.energy.electrostatic),
            fmt_f64(s.energy.total),
            fmt_f64(s.dissipation_step),
            fmt_f64(s.dissipation_cum),
            fmt_f64(s.min_gap),
            s.coincidence_count.to_string(),
            fmt_f64(s.multiplier_mass),
            s.fp_iters.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn write_trace_csv(path: &Path, trace: &SimulationTrace) -> Result<(), IoError> {
    write_text(path, &trace_csv(trace))
}

/// Reads one numeric column of a trace CSV.
pub fn read_trace_column(path: &Path, column: &str) -> Result<Vec<f64>, IoError> {
    let fmt = |msg: String| IoError::Format {
        path: path.to_path_buf(),
        msg,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| fmt(e.to_string()))?;
    let idx = r
        .headers()
        .map_err(|e| fmt(e.to_string()))?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| fmt(format!("no column {column}")))?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| fmt(e.to_string()))?;
            rec[idx]
                .parse::<f64>()
                .map_err(|e| fmt(format!("{column}: {e}")))
        })
        .collect()
}

/// What goes into one snapshot file.
pub struct SnapshotData<'a> {
    pub index: usize,
    pub t: f64,
    pub state: &'a BeamState,
    pub multiplier: &'a [f64],
    pub potential: Option<&'a PotentialSolution>,
}

pub fn snapshot_json(s: &SnapshotData) -> String {
    let g = s.state.grid;
    let mut out = String::new();
    let _ = write!(
        out,
        "{{\"index\":{},\"t\":{},\"grid\":{{\"half_width\":{},\"n\":{},\"x\":{}}},\"deflection\":{},\"multiplier\":{}",
        s.index,
        json_num(s.t),
        json_num(g.half_width),
        g.n,
        json_array(g.nodes()),
        json_array(s.state.values.iter().copied()),
        json_array(s.multiplier.iter().copied()),
    );
    if let Some(sol) = s.potential {
        let m = &sol.mesh;
        let flat = |rows: Vec<Vec<f64>>| json_array(rows.into_iter().flatten());
        let _ = write!(
            out,
            ",\"potential\":{{\"n_z_layer\":{},\"n_eta_gap\":{},\"layer_bottom\":{},\"layer_top\":{},\"ordering\":\"column-major, x outer\",\"heights\":{},\"psi1\":{},\"phi2\":{}}}",
            m.n_z,
            m.n_eta,
            json_num(m.geometry.layer_bottom()),
            json_num(m.geometry.interface()),
            json_array(m.heights.iter().copied()),
            flat(sol.psi1()),
            flat(sol.phi2()),
        );
    }
    out.push_str("}\n");
    out
}

pub fn write_snapshot(path: &Path, s: &SnapshotData) -> Result<(), IoError> {
    write_text(path, &snapshot_json(s))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SnapshotGrid {
    pub half_width: f64,
    pub n: usize,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SnapshotPotential {
    pub n_z_layer: usize,
    pub n_eta_gap: usize,
    pub heights: Vec<f64>,
    pub psi1: Vec<f64>,
    pub phi2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct LoadedSnapshot {
    pub index: usize,
    pub t: f64,
    pub grid: SnapshotGrid,
    pub deflection: Vec<f64>,
    pub multiplier: Vec<f64>,
    pub potential: Option<SnapshotPotential>,
}

impl LoadedSnapshot {
    pub fn state(&self) -> BeamState {
        BeamState::new(
            BeamGrid::new(self.grid.half_width, self.grid.n),
            self.deflection.clone(),
        )
    }
}

pub fn read_snapshot(path: &Path) -> Result<LoadedSnapshot, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Reads a nodal table: one value per line (`u`) or two (`x u`), separated
/// by whitespace or commas; `#` starts a comment.
pub fn read_table(path: &Path, grid: BeamGrid) -> Result<Vec<f64>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let fmt = |msg: String| IoError::Format {
        path: path.to_path_buf(),
        msg,
    };
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| fmt(format!("line {}: {e}", lineno + 1)))?;
        let u = match fields.as_slice() {
            [u] => *u,
            [x, u] => {
                let expect = grid.x(values.len().min(grid.n));
                if (x - expect).abs() > 1e-9 * grid.half_width.max(1.0) {
                    return Err(fmt(format!(
                        "line {}: x = {x} does not match grid node {expect}",
                        lineno + 1
                    )));
                }
                *u
            }
            _ => return Err(fmt(format!("line {}: expected 1 or 2 columns", lineno + 1))),
        };
        values.push(u);
    }
    if values.len() != grid.n + 1 {
        return Err(fmt(format!(
            "expected {} rows (n_x + 1), found {}",
            grid.n + 1,
            values.len()
        )));
    }
    Ok(values)
}

/// Builds `u_0` from the configuration; table paths are relative to
/// `base_dir`.
pub fn initial_state(cfg: &ValidatedConfig, base_dir: &Path) -> Result<BeamState, IoError> {
    let grid = BeamGrid::new(cfg.physical.half_width, cfg.numerical.n_x);
    let state = match &cfg.initial {
        InitialCondition::Zero => BeamState::zeros(grid),
        InitialCondition::Bump { amplitude } => BeamState::clamped_bump(grid, *amplitude),
        InitialCondition::Table { path } => {
            let p = base_dir.join(path);
            let values = read_table(&p, grid)?;
            BeamState::new(grid, values)
        }
    };
    if !state.is_clamped() {
        return Err(IoError::Initial(format!(
            "end values must vanish, got {} and {}",
            state.values[0], state.values[grid.n]
        )));
    }
    if !state.is_admissible(cfg.physical.gap) {
        return Err(IoError::Initial(format!(
            "min u0 = {} is below -H = {}",
            state.min(),
            -cfg.physical.gap
        )));
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRollup {
    pub total: usize,
    pub passed: usize,
    pub failed: Vec<String>,
}

impl CheckRollup {
    pub fn from_reports(reports: &[CheckReport]) -> Self {
        Self {
            total: reports.len(),
            passed: reports.iter().filter(|r| r.passed).count(),
            failed: reports
                .iter()
                .filter(|r| !r.passed)
                .map(|r| format!("{} ({})", r.name, r.context))
                .collect(),
        }
    }

    pub fn all_passed(&self) -> bool {
        self.failed.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceOnset {
    pub step: usize,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RawConfig,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    pub status: String,
    pub files: Vec<String>,
    pub checks: CheckRollup,
    pub coincidence_onset: Option<CoincidenceOnset>,
    pub delta: f64,
    pub delta0: f64,
    pub c1: f64,
    pub steps: usize,
    pub warnings: Vec<String>,
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn unix_time() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    write_text(path, &(text + "\n"))
}

/// Lists the files under `dir` (relative paths, sorted).
pub fn inventory(dir: &Path) -> Result<Vec<String>, IoError> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), IoError> {
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let entry = entry.map_err(io_err(dir))?;
            let path = entry.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else if let Ok(rel) = path.strip_prefix(root) {
                out.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}
