//! Checkers and reference solutions: exact flat-plate capacitor, energy and
//! multiplier bookkeeping of a trace, manufactured-solution and refinement
//! studies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam::{l2_norm_sq, BeamGrid, BeamState};
use crate::dielectric::{layered_lift_model, BoundaryDataModel, LayerGeometry, PermittivityModel, Sigma1Profile};
use crate::electrostatics::{directional_derivative_check, DirectionalRow, Electrostatics, ElectrostaticsError};
use crate::linalg::{norm_inf, BandedSpd, LinalgError};
use crate::minimizing_movements::{
    RunError, RunOptions, Scheme, SchemeError, SimulationTrace, StepResult,
};
use crate::transmission::{
    build_mesh, l2_error, solve_with, traces, CompositeMesh, MeshSpec, TransmissionData,
    TransmissionError,
};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("flat plate at w = {0} is not above the obstacle")]
    BelowObstacle(f64),
    #[error("at least {needed} levels are required, got {got}")]
    TooFewLevels { needed: usize, got: usize },
    #[error("steady iteration left the admissible set at iteration {0}")]
    Contact(usize),
    #[error("steady iteration did not converge in {iterations} iterations (update {update:e})")]
    SteadyNoConvergence { iterations: usize, update: f64 },
    #[error(transparent)]
    Dielectric(#[from] crate::dielectric::DielectricError),
    #[error(transparent)]
    Transmission(#[from] TransmissionError),
    #[error(transparent)]
    Electrostatics(#[from] ElectrostaticsError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Run(#[from] Box<RunError>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub context: String,
}

impl CheckReport {
    /// Fails when `measured > bound + tolerance` (or `measured` is NaN).
    pub fn new(
        name: impl Into<String>,
        measured: f64,
        bound: f64,
        tolerance: f64,
        context: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            passed: measured <= bound + tolerance,
            measured,
            bound,
            tolerance,
            context: context.into(),
        }
    }

    /// `measured - bound - tolerance`; positive means failure.
    pub fn excess(&self) -> f64 {
        self.measured - self.bound - self.tolerance
    }
}

/// One report per check name: the worst instance, with the number of
/// failures in the context.
pub fn summarize(reports: &[CheckReport]) -> Vec<CheckReport> {
    let mut names: Vec<&str> = Vec::new();
    for r in reports {
        if !names.contains(&r.name.as_str()) {
            names.push(&r.name);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let group: Vec<&CheckReport> = reports.iter().filter(|r| r.name == name).collect();
            let failures = group.iter().filter(|r| !r.passed).count();
            let worst = group
                .iter()
                .copied()
                .max_by(|a, b| {
                    // NaN counts as the worst possible excess.
                    let key = |r: &CheckReport| if r.excess().is_nan() { f64::INFINITY } else { r.excess() };
                    key(a).total_cmp(&key(b))
                })
                .expect("non-empty group");
            CheckReport {
                context: format!("worst at {}; {failures}/{} failed", worst.context, group.len()),
                ..worst.clone()
            }
        })
        .collect()
}

pub fn all_passed(reports: &[CheckReport]) -> bool {
    reports.iter().all(|r| r.passed)
}

/// Exact potential of a flat plate at constant height `w` over a layer with
/// `x`-dependent permittivity.
#[derive(Debug, Clone)]
pub struct FlatPlateOracle {
    pub deflection: f64,
    /// `dz psi_2` at the plate, per node.
    pub plate_trace: Vec<f64>,
    pub force: Vec<f64>,
    pub energy: f64,
    bdata: BoundaryDataModel,
}

impl FlatPlateOracle {
    pub fn potential(&self, x: f64, z: f64) -> f64 {
        self.bdata.lifted(x, z, self.deflection)
    }
}

pub fn flat_plate_oracle(
    perm: &PermittivityModel,
    potential: f64,
    w: f64,
    grid: BeamGrid,
) -> Result<FlatPlateOracle, DiagnosticsError> {
    let geo = perm.geometry;
    if w <= -geo.gap {
        return Err(DiagnosticsError::BelowObstacle(w));
    }
    let bdata = layered_lift_model(perm, potential)?;
    let s2 = perm.sigma2;
    let mut plate_trace = Vec::with_capacity(grid.n + 1);
    let mut force = Vec::with_capacity(grid.n + 1);
    let mut density = Vec::with_capacity(grid.n + 1);
    for x in grid.nodes() {
        let s1 = perm.sigma1(x, geo.interface());
        let den = s2 * geo.thickness + s1 * (geo.gap + w);
        let t = potential * s1 / den;
        plate_trace.push(t);
        force.push(0.5 * s2 * t * t);
        density.push(potential * potential * s1 * s2 / den);
    }
    Ok(FlatPlateOracle {
        deflection: w,
        plate_trace,
        force,
        energy: -0.5 * grid.integrate(&density),
        bdata,
    })
}

/// Discrete-versus-exact errors for a flat plate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatPlateComparison {
    /// Sup error of the potential over all nodes of interior columns.
    pub potential: f64,
    pub plate_trace: f64,
    pub force: f64,
    pub consistent_force: f64,
    pub energy: f64,
    pub exact_force_mid: f64,
    pub exact_energy: f64,
}

pub fn compare_flat_plate(
    es: &Electrostatics,
    grid: BeamGrid,
    w: f64,
) -> Result<FlatPlateComparison, DiagnosticsError> {
    let oracle = flat_plate_oracle(&es.perm, es.bdata.potential(), w, grid)?;
    let state = BeamState::new(grid, vec![w; grid.n + 1]);
    let ev = es.evaluate(&state)?;
    let mesh = &ev.solution.mesh;
    let mut potential = 0.0_f64;
    for i in 1..grid.n {
        for level in 0..mesh.levels() {
            let (x, z) = mesh.coords(i, level);
            potential = potential.max((ev.solution.at(i, level) - oracle.potential(x, z)).abs());
        }
    }
    let tr = traces(&ev.solution);
    let interior = 1..grid.n;
    let sup = |f: &dyn Fn(usize) -> f64| interior.clone().map(f).fold(0.0_f64, f64::max);
    Ok(FlatPlateComparison {
        potential,
        plate_trace: sup(&|i| (tr[i].plate.unwrap_or(f64::NAN) - oracle.plate_trace[i]).abs()),
        force: sup(&|i| (ev.force.values[i] - oracle.force[i]).abs()),
        consistent_force: sup(&|i| (ev.consistent_force[i] - oracle.force[i]).abs()),
        energy: (ev.energy - oracle.energy).abs(),
        exact_force_mid: oracle.force[grid.n / 2],
        exact_energy: oracle.energy,
    })
}

/// Per-step and per-state energy checks of a completed trace.
pub fn check_energy_ledger(trace: &SimulationTrace, beta: f64, tol_fp: f64) -> Vec<CheckReport> {
    let steps = &trace.steps;
    let c1 = trace.constants.c1;
    let e0 = steps[0].energy.total;
    let l2_0 = steps[0].l2_sq;
    let envelope_base = 6.0 * l2_0 + 2.0 + 2.0 * e0 / c1;
    let mut out = Vec::with_capacity(5 * steps.len());
    for (n, s) in steps.iter().enumerate() {
        let ctx = format!("step {n}");
        let slack = n as f64 * 10.0 * tol_fp;
        if n > 0 {
            let excess = s.dissipation_step + s.energy.total - steps[n - 1].energy.total;
            out.push(CheckReport::new("energy_decrease", excess, 0.0, 10.0 * tol_fp, &ctx));
            out.push(CheckReport::new(
                "cumulative_energy",
                s.dissipation_cum + s.energy.total - e0,
                0.0,
                slack,
                &ctx,
            ));
        }
        let floor = 0.25 * beta * s.d2_sq - c1 * (1.0 + s.l2_sq);
        out.push(CheckReport::new(
            "energy_floor",
            floor - s.energy.total,
            0.0,
            1e-9 * (1.0 + s.energy.total.abs()),
            &ctx,
        ));
        let envelope = envelope_base * (16.0 * c1 * n as f64 * trace.delta).exp();
        out.push(CheckReport::new("l2_envelope", s.l2_sq, envelope, 0.0, &ctx));
        out.push(CheckReport::new(
            "h2_bound",
            s.dissipation_cum + 0.25 * beta * s.d2_sq,
            e0 + c1 * (1.0 + s.l2_sq),
            slack,
            &ctx,
        ));
    }
    out
}

/// `x_T = max{L - (H / 2K)^(2/3), L/2}`: the multiplier vanishes outside
/// `[-x_T, x_T]` when `K` bounds the `H^2` norm.
pub fn support_bound(half_width: f64, gap: f64, k_h2: f64) -> f64 {
    if k_h2 <= 0.0 {
        return 0.5 * half_width;
    }
    (half_width - (gap / (2.0 * k_h2)).powf(2.0 / 3.0)).max(0.5 * half_width)
}

/// Sign, complementarity, support and localization of one nodal multiplier.
pub fn check_multiplier(
    state: &BeamState,
    multiplier: &[f64],
    gap: f64,
    eps_gap: f64,
    tol_as: f64,
    k_h2: f64,
    context: &str,
) -> Vec<CheckReport> {
    let grid = state.grid;
    let u = &state.values;
    let infeasible = u.iter().fold(0.0_f64, |m, &v| m.max(-gap - v));
    let sign = multiplier.iter().fold(0.0_f64, |m, &z| m.max(z));
    let compl = multiplier
        .iter()
        .zip(u)
        .fold(0.0_f64, |m, (z, v)| m.max((z * (v + gap)).abs()));
    let outside = multiplier
        .iter()
        .zip(u)
        .filter(|(_, &v)| v + gap > eps_gap)
        .fold(0.0_f64, |m, (z, _)| m.max(z.abs()));
    let extent = multiplier
        .iter()
        .enumerate()
        .filter(|(_, &z)| z < -tol_as)
        .map(|(i, _)| grid.x(i).abs())
        .fold(0.0_f64, f64::max);
    let weights = grid.weights();
    let mass: f64 = multiplier.iter().zip(&weights).map(|(z, w)| -z * w).sum();
    let x_t = support_bound(grid.half_width, gap, k_h2);
    vec![
        CheckReport::new("feasibility", infeasible, 0.0, 0.0, context),
        CheckReport::new("multiplier_sign", sign, 0.0, tol_as, context),
        CheckReport::new("complementarity", compl, 0.0, tol_as, context),
        CheckReport::new("support_in_coincidence", outside, 0.0, 0.0, context),
        CheckReport::new("support_localization", extent, x_t, 0.0, context),
        CheckReport::new("multiplier_mass", -mass, 0.0, tol_as, context),
    ]
}

/// A run together with every mandatory check.
#[derive(Debug)]
pub struct CheckedRun {
    pub trace: SimulationTrace,
    /// Energy checks of the accepted part of the trace.
    pub ledger: Vec<CheckReport>,
    /// Multiplier checks at every accepted step.
    pub multiplier: Vec<CheckReport>,
    /// Step failure, if the run stopped early.
    pub failure: Option<(usize, SchemeError)>,
}

impl CheckedRun {
    pub fn reports(&self) -> Vec<CheckReport> {
        self.ledger.iter().chain(&self.multiplier).cloned().collect()
    }

    pub fn passed(&self) -> bool {
        self.failure.is_none() && all_passed(&self.ledger) && all_passed(&self.multiplier)
    }
}

/// Runs the scheme and checks the multiplier after each step. The support
/// bound uses the largest `H^2` norm seen up to that step, which bounds the
/// norm on the elapsed interval.
pub fn run_checked(
    scheme: &Scheme,
    u0: &BeamState,
    delta: f64,
    t_end: f64,
    opts: &RunOptions,
    mut on_step: impl FnMut(usize, &StepResult),
) -> CheckedRun {
    let num = scheme.numerical;
    let gap = scheme.physical.gap;
    let mut k_h2 = crate::beam::h2_norm(u0);
    let mut multiplier = Vec::new();
    let result = scheme.run_with(u0, delta, t_end, opts, |n, step| {
        k_h2 = k_h2.max(crate::beam::h2_norm(&step.state));
        multiplier.extend(check_multiplier(
            &step.state,
            &step.multiplier,
            gap,
            num.eps_gap,
            num.tol_as,
            k_h2,
            &format!("step {n}"),
        ));
        on_step(n, step);
    });
    let (trace, failure) = match result {
        Ok(trace) => (trace, None),
        Err(e) => (*e.trace, Some((e.step, e.source))),
    };
    let ledger = check_energy_ledger(&trace, scheme.physical.beta, num.tol_fp);
    CheckedRun {
        trace,
        ledger,
        multiplier,
        failure,
    }
}

/// Manufactured transmission problem: `sigma1 = 1`, `sigma2 = 2`,
/// `L = H = d = 1`, plate `u = -0.4 (1 - x^2)^2`, and smooth potentials
/// matching value and flux at the interface.
pub struct Manufactured;

impl Manufactured {
    pub const SIGMA1: f64 = 1.0;
    pub const SIGMA2: f64 = 2.0;

    pub fn geometry() -> LayerGeometry {
        LayerGeometry {
            half_width: 1.0,
            gap: 1.0,
            thickness: 1.0,
        }
    }

    pub fn plate(x: f64) -> f64 {
        -0.4 * (1.0 - x * x).powi(2)
    }

    fn a(x: f64) -> (f64, f64) {
        let k = std::f64::consts::FRAC_PI_2;
        (1.0 + 0.3 * (k * x).sin(), -0.3 * k * k * (k * x).sin())
    }

    fn b(x: f64) -> (f64, f64) {
        (0.8 * (0.5 * x).cos(), -0.2 * (0.5 * x).cos())
    }

    pub fn exact(x: f64, z: f64) -> f64 {
        let s = z + 1.0;
        let (a, _) = Self::a(x);
        let (b, _) = Self::b(x);
        if s < 0.0 {
            a + Self::SIGMA2 / Self::SIGMA1 * b * s + 0.3 * s * s * x.cos()
        } else {
            a + b * s + 0.2 * s * s * x.sin()
        }
    }

    /// `-div(sigma grad psi)`.
    pub fn source(x: f64, z: f64, in_layer: bool) -> f64 {
        let s = z + 1.0;
        let (_, a2) = Self::a(x);
        let (_, b2) = Self::b(x);
        if in_layer {
            let c = Self::SIGMA2 / Self::SIGMA1;
            let lap = a2 + c * b2 * s - 0.3 * s * s * x.cos() + 0.6 * x.cos();
            -Self::SIGMA1 * lap
        } else {
            let lap = a2 + b2 * s - 0.2 * s * s * x.sin() + 0.4 * x.sin();
            -Self::SIGMA2 * lap
        }
    }

    pub fn permittivity() -> PermittivityModel {
        PermittivityModel::from_profile(
            Sigma1Profile::Constant {
                value: Self::SIGMA1,
            },
            Self::SIGMA2,
            Self::geometry(),
        )
        .expect("valid manufactured permittivity")
    }

    pub fn mesh(n_x: usize, n_z: usize) -> CompositeMesh {
        let grid = BeamGrid::new(1.0, n_x);
        let state = BeamState::clamped_bump(grid, -0.4);
        build_mesh(
            &state,
            Self::geometry(),
            MeshSpec {
                n_z_layer: n_z,
                n_eta_gap: n_z,
                eps_gap: 1e-9,
            },
        )
    }
}

impl TransmissionData for Manufactured {
    fn dirichlet(&self, mesh: &CompositeMesh, i: usize, level: usize) -> f64 {
        let (x, z) = mesh.coords(i, level);
        Self::exact(x, z)
    }

    fn source(&self, x: f64, z: f64, in_layer: bool) -> Option<f64> {
        Some(Self::source(x, z, in_layer))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRow {
    pub study: String,
    pub level: usize,
    pub n_x: usize,
    pub error: f64,
    /// `log2(e_{k-1} / e_k)`
    pub order: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<OrderRow>,
}

impl ConvergenceTable {
    fn push_series(&mut self, study: &str, series: &[(usize, f64)]) {
        for (k, &(n_x, error)) in series.iter().enumerate() {
            let order = (k > 0).then(|| (series[k - 1].1 / error).log2());
            self.rows.push(OrderRow {
                study: study.into(),
                level: k,
                n_x,
                error,
                order,
            });
        }
    }

    pub fn study(&self, name: &str) -> Vec<&OrderRow> {
        self.rows.iter().filter(|r| r.study == name).collect()
    }

    /// Smallest observed order of a study (`None` if it has no orders).
    pub fn min_order(&self, name: &str) -> Option<f64> {
        self.study(name)
            .iter()
            .filter_map(|r| r.order)
            .reduce(f64::min)
    }

    pub fn max_error(&self, name: &str) -> Option<f64> {
        self.study(name).iter().map(|r| r.error).reduce(f64::max)
    }
}

/// `L2` errors of the manufactured problem on meshes `(8·2^k, 4·2^k)`.
pub fn manufactured_study(levels: usize) -> Result<Vec<(usize, f64)>, DiagnosticsError> {
    let perm = Manufactured::permittivity();
    (0..levels)
        .map(|k| {
            let n_x = 8 << k;
            let mesh = Manufactured::mesh(n_x, 4 << k);
            let sol = solve_with(&mesh, &perm, &Manufactured, 1e-12)?;
            Ok((n_x, l2_error(&sol, Manufactured::exact)))
        })
        .collect()
}

/// Stationary state without contact, found by the damped fixed point
/// `u = (β K2 + c K1)^{-1} (-W g(u))`.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub state: BeamState,
    pub residual: f64,
    pub iterations: usize,
}

/// Sup norm of `β D4 u - c D2 u + g(u)` on interior nodes, with the force
/// model of the scheme.
pub fn steady_residual(scheme: &Scheme, state: &BeamState) -> Result<f64, DiagnosticsError> {
    let ev = scheme.electrostatics.evaluate(state)?;
    let g = scheme.force_model.nodal(&ev);
    let v = state.interior_values();
    let ops = &scheme.operators;
    let p = &scheme.physical;
    let c = p.tau + p.a * l2_norm_sq(&state.grid, &crate::beam::first_difference(state));
    let d4 = ops.fourth_derivative(v);
    let d2 = ops.laplacian(v);
    let r: Vec<f64> = (0..v.len())
        .map(|i| p.beta * d4[i] - c * d2[i] + g[i + 1])
        .collect();
    Ok(norm_inf(&r))
}

pub fn steady_state(
    scheme: &Scheme,
    initial: &BeamState,
    tol: f64,
    max_iter: usize,
) -> Result<SteadyState, DiagnosticsError> {
    let grid = scheme.grid();
    let ops = &scheme.operators;
    let p = &scheme.physical;
    let m = ops.mass.len();
    let mut v = initial.interior_values().to_vec();
    let mut omega = 1.0;
    let mut last = f64::INFINITY;
    for it in 1..=max_iter {
        let state = BeamState::from_interior(grid, &v);
        if !state.is_admissible(p.gap) || state.min() <= -p.gap + scheme.numerical.eps_gap {
            return Err(DiagnosticsError::Contact(it));
        }
        let ev = scheme.electrostatics.evaluate(&state)?;
        let g = scheme.force_model.nodal(&ev);
        let c = p.tau + p.a * l2_norm_sq(&grid, &crate::beam::first_difference(&state));
        let mut a = BandedSpd::zeros(m, 2);
        for i in 0..m {
            for j in i.saturating_sub(2)..=i {
                a.add(i, j, p.beta * ops.bending.get(i, j) + c * ops.stretching.get(i, j));
            }
        }
        let rhs: Vec<f64> = (0..m).map(|i| -ops.mass[i] * g[i + 1]).collect();
        let target = a.factor()?.solve(&rhs)?;
        let diff: Vec<f64> = target.iter().zip(&v).map(|(t, x)| t - x).collect();
        let update = norm_inf(&diff);
        if update <= tol {
            let state = BeamState::from_interior(grid, &target);
            let residual = steady_residual(scheme, &state)?;
            return Ok(SteadyState {
                state,
                residual,
                iterations: it,
            });
        }
        if update > last {
            omega *= 0.5;
        }
        last = update;
        for i in 0..m {
            v[i] += omega * diff[i];
        }
    }
    Err(DiagnosticsError::SteadyNoConvergence {
        iterations: max_iter,
        update: last,
    })
}

/// Mesh-doubling study: manufactured transmission solution, flat-plate force
/// at `w = 0`, and (when the configuration stays out of contact) the steady
/// deflection, whose error is estimated from successive levels on the
/// coarsest grid's nodes.
pub fn convergence_study(
    base: &Scheme,
    levels: usize,
) -> Result<ConvergenceTable, DiagnosticsError> {
    if levels < 3 {
        return Err(DiagnosticsError::TooFewLevels {
            needed: 3,
            got: levels,
        });
    }
    let mut table = ConvergenceTable::default();
    table.push_series("manufactured_l2", &manufactured_study(levels)?);

    let mut flat = Vec::new();
    for k in 0..levels {
        let n_x = 8 << k;
        let mut es = base.electrostatics.clone();
        es.mesh.n_z_layer = 4 << k;
        es.mesh.n_eta_gap = 4 << k;
        let cmp = compare_flat_plate(&es, BeamGrid::new(base.physical.half_width, n_x), 0.0)?;
        flat.push((n_x, cmp.force));
    }
    for (k, &(n_x, error)) in flat.iter().enumerate() {
        table.rows.push(OrderRow {
            study: "flat_plate_force".into(),
            level: k,
            n_x,
            error,
            order: None,
        });
    }

    let steady: Result<Vec<BeamState>, DiagnosticsError> = (0..levels + 1)
        .map(|k| {
            let mut numerical = base.numerical;
            numerical.n_x = 16 << k;
            numerical.n_z_layer = 4 << k;
            numerical.n_eta_gap = 4 << k;
            let scheme = rescaled(base, numerical);
            let zero = BeamState::zeros(scheme.grid());
            Ok(steady_state(&scheme, &zero, 1e-13, 500)?.state)
        })
        .collect();
    match steady {
        Ok(states) => {
            let coarse = states[0].grid.n;
            let series: Vec<(usize, f64)> = states
                .windows(2)
                .map(|w| {
                    let (a, b) = (&w[0], &w[1]);
                    let ra = a.grid.n / coarse;
                    let rb = b.grid.n / coarse;
                    let err = (0..=coarse)
                        .map(|i| (a.values[i * ra] - b.values[i * rb]).abs())
                        .fold(0.0_f64, f64::max);
                    (a.grid.n, err)
                })
                .collect();
            table.push_series("steady_linf", &series);
        }
        Err(DiagnosticsError::Contact(_)) => {}
        Err(e) => return Err(e),
    }
    Ok(table)
}

fn rescaled(base: &Scheme, numerical: crate::model_config::NumericalParams) -> Scheme {
    let mut s = Scheme::new(
        base.physical,
        numerical,
        base.electrostatics.perm.clone(),
        base.electrostatics.bdata.clone(),
        base.constants,
    );
    s.force_model = base.force_model;
    s
}

/// The same scheme on a different beam/potential mesh.
pub fn at_resolution(base: &Scheme, n_x: usize, n_z_layer: usize, n_eta_gap: usize) -> Scheme {
    let mut numerical = base.numerical;
    numerical.n_x = n_x;
    numerical.n_z_layer = n_z_layer;
    numerical.n_eta_gap = n_eta_gap;
    rescaled(base, numerical)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub deltas: Vec<f64>,
    pub t: f64,
    /// `||u_k(t) - u_{k+1}(t)||_2` for successive step sizes.
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
    /// `max_k distance_k / delta_k`.
    pub constant: f64,
}

/// Runs the scheme for each step size (concurrently) and compares the
/// states at time `t`.
pub fn delta_refinement(
    scheme: &Scheme,
    u0: &BeamState,
    deltas: &[f64],
    t: f64,
) -> Result<RefinementStudy, DiagnosticsError> {
    let finals: Vec<Result<BeamState, DiagnosticsError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = deltas
            .iter()
            .map(|&delta| {
                scope.spawn(move || {
                    let tr = scheme
                        .run(u0, delta, t, &RunOptions::default())
                        .map_err(|e| DiagnosticsError::Run(Box::new(e)))?;
                    Ok(tr.last_snapshot().expect("final snapshot").state.clone())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("refinement run panicked"))
            .collect()
    });
    let finals: Vec<BeamState> = finals.into_iter().collect::<Result<_, _>>()?;
    let distances: Vec<f64> = finals
        .windows(2)
        .map(|w| {
            let d: Vec<f64> = w[0].values.iter().zip(&w[1].values).map(|(a, b)| a - b).collect();
            l2_norm_sq(&w[0].grid, &d).sqrt()
        })
        .collect();
    let ratios = distances.windows(2).map(|w| w[1] / w[0]).collect();
    let constant = distances
        .iter()
        .zip(deltas)
        .map(|(d, delta)| d / delta)
        .fold(0.0, f64::max);
    Ok(RefinementStudy {
        deltas: deltas.to_vec(),
        t,
        distances,
        ratios,
        constant,
    })
}

/// Standard base state and direction for the directional-derivative check:
/// `u = 0` and `w = -(H/40) b` with `b = (1 - (x/L)^2)^2`, whose maximum is 1.
pub fn standard_direction(grid: BeamGrid, gap: f64) -> (BeamState, BeamState) {
    let u = BeamState::zeros(grid);
    let w = BeamState::clamped_bump(grid, -0.1 * 0.25 * gap);
    (u, w)
}

/// Relative-error tolerance of the gradient check on a mesh with `n_x`
/// intervals: `1e-2` from 32 intervals up, growing like `h^2` below.
pub fn gradient_tolerance(n_x: usize) -> f64 {
    1e-2 * (32.0 / n_x as f64).powi(2).max(1.0)
}

pub fn gradient_check(
    es: &Electrostatics,
    grid: BeamGrid,
    s_list: &[f64],
) -> Result<Vec<DirectionalRow>, DiagnosticsError> {
    let (u, w) = standard_direction(grid, es.perm.geometry.gap);
    Ok(directional_derivative_check(es, &u, &w, s_list)?)
}
