//! Implicit Euler (minimizing movements) time stepping for the beam.
//!
//! Each step minimizes `(1/2δ)||v - u_n||^2 + E(v)` over clamped states with
//! `v >= -H` at every node. The nonconvex electrostatic part is handled by a
//! fixed point: the force and the stretching coefficient are frozen at the
//! current iterate, which leaves a convex obstacle problem for the
//! primal-dual active-set solver.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam::{
    first_difference, h2_norm, h2_seminorms, l2_norm_sq, mechanical_energy, BeamGrid, BeamOperators,
    BeamState,
};
use crate::dielectric::{layered_lift_model, BoundaryDataModel, MConstants, PermittivityModel};
use crate::electrostatics::{Electrostatics, FieldEvaluation};
use crate::linalg::{norm_inf, BandedSpd};
use crate::model_config::{NumericalParams, PhysicalParams, Validation};
use crate::obstacle::{BoundQp, QpError, QpMethod};
use crate::transmission::{MeshSpec, TransmissionError};

/// Residual tolerance handed to the potential solver.
pub const POTENTIAL_TOL: f64 = 1e-11;
/// Smallest backtracking factor before a step is declared failed.
pub const MIN_BACKTRACK: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("{0} must be positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("m-constants must be finite and non-negative: {0:?}")]
    BadMConstants(MConstants),
    #[error("configuration: {0}")]
    Config(String),
    #[error("state is not admissible: min u = {min_u}, obstacle at {obstacle}")]
    Inadmissible { min_u: f64, obstacle: f64 },
    #[error(transparent)]
    Transmission(#[from] TransmissionError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("fixed point did not converge in {iterations} iterations (last update {last_update:e}, theta {theta})")]
    FixedPoint {
        iterations: usize,
        last_update: f64,
        theta: f64,
        history: Vec<f64>,
    },
    #[error("energy decrease not restored by backtracking: excess {excess:e} at lambda {lambda:e}")]
    Backtracking { excess: f64, lambda: f64 },
}

/// Constants of the energy lower bound `E(v) >= β/4 ||v''||^2 - c1 (1 + ||v||^2)`
/// and the admissible step size derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConstants {
    pub c1: f64,
    pub delta0: f64,
    pub m: MConstants,
    /// Coefficient of `||v||^2` coming from the `m1` term.
    pub a_term: f64,
    /// Coefficient coming from the `m2` term.
    pub b_term: f64,
    /// Coefficient multiplying `||v''|| ||v||` through `m3`.
    pub k_term: f64,
    /// True when the chain produced `c1 = 0` and the floor `1/16` was used.
    pub floored: bool,
}

pub fn delta0_from_c1(c1: f64) -> f64 {
    (1.0 / (16.0 * c1)).min(1.0)
}

impl SchemeConstants {
    /// Constants with a prescribed `c1`, bypassing the estimate.
    pub fn pinned(c1: f64, m: MConstants) -> Self {
        Self {
            c1,
            delta0: delta0_from_c1(c1),
            m,
            a_term: 0.0,
            b_term: 0.0,
            k_term: 0.0,
            floored: false,
        }
    }
}

pub fn lower_bound_constant(
    physical: &PhysicalParams,
    sigma_max: f64,
    m: &MConstants,
) -> Result<SchemeConstants, SchemeError> {
    for (name, v) in [
        ("L", physical.half_width),
        ("d", physical.thickness),
        ("beta", physical.beta),
        ("sigma_max", sigma_max),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(SchemeError::NonPositive(name, v));
        }
    }
    if [m.m1, m.m2, m.m3].iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(SchemeError::BadMConstants(*m));
    }
    let scale = (physical.thickness + 1.0) * sigma_max;
    let a_term = 3.0 * physical.half_width * m.m1 * scale;
    let b_term = 1.5 * m.m2 * scale;
    let k_term = scale * m.m3;
    let young = k_term * k_term / physical.beta;
    let raw = (a_term + young).max(b_term + young);
    // With no field the bound holds for any c1 > 0; 1/16 keeps delta0 = 1.
    let floored = raw == 0.0;
    let c1 = if floored { 1.0 / 16.0 } else { raw };
    Ok(SchemeConstants {
        c1,
        delta0: delta0_from_c1(c1),
        m: *m,
        a_term,
        b_term,
        k_term,
        floored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub mechanical: f64,
    pub electrostatic: f64,
    pub total: f64,
}

/// A state together with its potential, force and energy.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub state: BeamState,
    pub field: FieldEvaluation,
    pub energy: EnergyBreakdown,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: BeamState,
    /// Nodal multiplier `ζ_i` (a density; `-ζ_i w_i` is the nodal mass).
    pub multiplier: Vec<f64>,
    pub velocity: Vec<f64>,
    pub energy: EnergyBreakdown,
    pub dissipation: f64,
    pub fp_iters: usize,
    pub as_iters: usize,
    /// `dissipation + E(u_{n+1}) - E(u_n)`.
    pub decrease_excess: f64,
    pub decrease_ok: bool,
    /// `max |ζ_i (u_i + H)|`.
    pub complementarity: f64,
    /// `max_i ζ_i` (positive values violate the sign condition).
    pub sign_violation: f64,
    /// Largest `|ζ_i|` outside the coincidence set.
    pub support_violation: f64,
    /// Sup norm of the discrete stationarity residual with `g(u_{n+1})`.
    pub stationarity: f64,
    pub backtrack: f64,
    pub used_fallback: bool,
    /// Nodes with `u_i + H <= eps_gap`.
    pub coincidence: Vec<bool>,
    /// Field at the new state, reused by the next step.
    pub evaluated: Evaluated,
}

impl StepResult {
    pub fn multiplier_mass(&self) -> f64 {
        let w = self.state.grid.weights();
        self.multiplier.iter().zip(&w).map(|(z, w)| -z * w).sum()
    }

    pub fn coincidence_count(&self) -> usize {
        self.coincidence.iter().filter(|&&c| c).count()
    }
}

/// One row of the monitored quantities; row 0 describes the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub index: usize,
    pub t: f64,
    pub energy: EnergyBreakdown,
    pub dissipation_step: f64,
    pub dissipation_cum: f64,
    pub min_gap: f64,
    pub coincidence_count: usize,
    pub multiplier_mass: f64,
    pub fp_iters: usize,
    pub as_iters: usize,
    /// `||u_n||^2`
    pub l2_sq: f64,
    /// `||u_n''||^2`
    pub d2_sq: f64,
    pub h2_norm: f64,
    pub decrease_excess: f64,
    pub complementarity: f64,
    pub sign_violation: f64,
    pub support_violation: f64,
    pub stationarity: f64,
    pub backtrack: f64,
    pub used_fallback: bool,
    /// Extent of the multiplier support, `max |x_i|` over `ζ_i != 0`.
    pub support_extent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub index: usize,
    pub t: f64,
    pub state: BeamState,
    pub multiplier: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub delta: f64,
    pub constants: SchemeConstants,
    pub steps: Vec<StepSummary>,
    pub snapshots: Vec<Snapshot>,
    pub warnings: Vec<String>,
    pub coincidence_onset: Option<usize>,
}

impl SimulationTrace {
    pub fn times(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.t).collect()
    }

    pub fn cumulative_dissipation(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.dissipation_cum)
    }

    pub fn initial(&self) -> &StepSummary {
        &self.steps[0]
    }

    pub fn last_snapshot(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    /// Largest discrete H² norm seen over the trace.
    pub fn max_h2_norm(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.h2_norm))
    }
}

/// A run that stopped on a step error; the trace holds everything accepted.
#[derive(Debug, Error)]
#[error("step {step} failed: {source}")]
pub struct RunError {
    pub step: usize,
    pub trace: Box<SimulationTrace>,
    #[source]
    pub source: SchemeError,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub struct RunOptions {
    /// Keep every k-th state (0 keeps only the first and last).
    pub keep_every: usize,
}


/// Which nodal force enters each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForceModel {
    /// Exact gradient of the discrete electrostatic energy; makes every
    /// fixed point a stationary point of the discrete step functional.
    #[default]
    Consistent,
    /// The trace formula for `g(u)`; converges to the same force under mesh
    /// refinement but is not the exact discrete gradient.
    Trace,
}

impl ForceModel {
    pub fn nodal<'a>(&self, field: &'a FieldEvaluation) -> &'a [f64] {
        match self {
            Self::Consistent => &field.consistent_force,
            Self::Trace => &field.force.values,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scheme {
    pub physical: PhysicalParams,
    pub numerical: NumericalParams,
    pub electrostatics: Electrostatics,
    pub operators: BeamOperators,
    pub constants: SchemeConstants,
    pub force_model: ForceModel,
}

impl Scheme {
    pub fn new(
        physical: PhysicalParams,
        numerical: NumericalParams,
        perm: PermittivityModel,
        bdata: BoundaryDataModel,
        constants: SchemeConstants,
    ) -> Self {
        let grid = BeamGrid::new(physical.half_width, numerical.n_x);
        Self {
            physical,
            numerical,
            electrostatics: Electrostatics {
                perm,
                bdata,
                mesh: MeshSpec {
                    n_z_layer: numerical.n_z_layer,
                    n_eta_gap: numerical.n_eta_gap,
                    eps_gap: numerical.eps_gap,
                },
                tol: POTENTIAL_TOL,
            },
            operators: BeamOperators::new(grid),
            constants,
            force_model: ForceModel::default(),
        }
    }

    pub fn from_validation(v: &Validation) -> Result<Self, SchemeError> {
        let cfg = &v.config;
        let perm = cfg
            .permittivity()
            .map_err(|e| SchemeError::Config(e.to_string()))?;
        let bdata = layered_lift_model(&perm, cfg.physical.potential)
            .map_err(|e| SchemeError::Config(e.to_string()))?;
        Ok(Self::new(cfg.physical, cfg.numerical, perm, bdata, v.scheme))
    }

    pub fn grid(&self) -> BeamGrid {
        self.operators.grid
    }

    fn check_admissible(&self, state: &BeamState) -> Result<(), SchemeError> {
        if !state.is_admissible(self.physical.gap) {
            return Err(SchemeError::Inadmissible {
                min_u: state.min(),
                obstacle: -self.physical.gap,
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, state: &BeamState) -> Result<Evaluated, SchemeError> {
        self.check_admissible(state)?;
        let field = self.electrostatics.evaluate(state)?;
        let mechanical = mechanical_energy(state, &self.physical);
        let energy = EnergyBreakdown {
            mechanical,
            electrostatic: field.energy,
            total: mechanical + field.energy,
        };
        Ok(Evaluated {
            state: state.clone(),
            field,
            energy,
        })
    }

    fn stretch_coefficient(&self, state: &BeamState) -> f64 {
        let dx = first_difference(state);
        self.physical.tau + self.physical.a * l2_norm_sq(&state.grid, &dx)
    }

    /// `W/δ + β K2 + c K1` on the interior unknowns.
    fn step_matrix(&self, delta: f64, c: f64) -> BandedSpd {
        let ops = &self.operators;
        let m = ops.mass.len();
        let mut q = BandedSpd::zeros(m, 2);
        for i in 0..m {
            for j in i.saturating_sub(2)..=i {
                let mut v = self.physical.beta * ops.bending.get(i, j)
                    + c * ops.stretching.get(i, j);
                if i == j {
                    v += ops.mass[i] / delta;
                }
                q.add(i, j, v);
            }
        }
        q
    }

    pub fn step(&self, u_n: &BeamState, delta: f64) -> Result<StepResult, SchemeError> {
        let prev = self.evaluate(u_n)?;
        self.step_from(&prev, delta)
    }

    /// One step from an already evaluated state.
    pub fn step_from(&self, prev: &Evaluated, delta: f64) -> Result<StepResult, SchemeError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(SchemeError::NonPositive("delta", delta));
        }
        let num = &self.numerical;
        let grid = self.grid();
        let ops = &self.operators;
        let h = self.physical.gap;
        let m = ops.mass.len();
        let u_n = prev.state.interior_values().to_vec();

        let mut v = u_n.clone();
        let mut field = prev.field.clone();
        let mut active: Vec<bool> = v.iter().map(|&x| x <= -h).collect();
        let mut theta = num.theta;
        let mut history = Vec::new();
        let mut rising = 0;
        let mut as_iters = 0;
        let mut used_fallback = false;
        let mut converged = None;
        for k in 1..=num.max_fp {
            if k > 1 {
                let state = BeamState::from_interior(grid, &v);
                field = self.electrostatics.evaluate(&state)?;
            }
            let c = self.stretch_coefficient(&BeamState::from_interior(grid, &v));
            let q = self.step_matrix(delta, c);
            let g = &self.force_model.nodal(&field)[1..grid.n];
            let b: Vec<f64> = (0..m)
                .map(|i| ops.mass[i] * (u_n[i] / delta - g[i]))
                .collect();
            let sol = BoundQp {
                q: &q,
                b: &b,
                lower: -h,
            }
            .solve(Some(&active), num.max_as)?;
            as_iters += sol.iterations;
            used_fallback |= sol.method == QpMethod::PrimalFallback;
            active = sol.active.clone();
            let diff: Vec<f64> = sol.v.iter().zip(&v).map(|(a, b)| a - b).collect();
            let update = norm_inf(&diff);
            if update <= num.tol_fp {
                converged = Some((k, sol));
                break;
            }
            if let Some(&last) = history.last() {
                if update > last {
                    rising += 1;
                    if rising >= 2 {
                        theta *= 0.5;
                        rising = 0;
                    }
                } else {
                    rising = 0;
                }
            }
            history.push(update);
            for i in 0..m {
                // Convex combination of feasible points stays feasible.
                v[i] = (v[i] + theta * diff[i]).max(-h);
            }
        }
        let Some((fp_iters, sol)) = converged else {
            return Err(SchemeError::FixedPoint {
                iterations: num.max_fp,
                last_update: history.last().copied().unwrap_or(f64::NAN),
                theta,
                history,
            });
        };

        // The QP multiplier is the reaction divided by the node weight.
        let qp_zeta: Vec<f64> = sol
            .reaction
            .iter()
            .zip(&ops.mass)
            .map(|(r, w)| -r / w)
            .collect();
        let candidate = sol.v;

        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = if lambda == 1.0 {
                candidate.clone()
            } else {
                u_n.iter()
                    .zip(&candidate)
                    .map(|(a, b)| (a + lambda * (b - a)).max(-h))
                    .collect()
            };
            let state = BeamState::from_interior(grid, &trial);
            let next = self.evaluate(&state)?;
            let dissipation = 0.5 / delta
                * (0..m)
                    .map(|i| ops.mass[i] * (trial[i] - u_n[i]).powi(2))
                    .sum::<f64>();
            let excess = dissipation + next.energy.total - prev.energy.total;
            let decrease_ok = excess <= num.tol_fp;
            if decrease_ok || lambda < MIN_BACKTRACK {
                if !decrease_ok {
                    return Err(SchemeError::Backtracking { excess, lambda });
                }
                let zeta = if lambda == 1.0 {
                    qp_zeta.clone()
                } else {
                    // Off the stationary point: keep only the admissible
                    // part of the residual on contact nodes.
                    let r = self.residual_multiplier(&trial, &u_n, delta, &next);
                    (0..m)
                        .map(|i| if trial[i] <= -h { r[i].min(0.0) } else { 0.0 })
                        .collect()
                };
                return Ok(self.finish(
                    prev, next, &trial, &u_n, &zeta, delta, dissipation, excess, fp_iters,
                    as_iters, lambda, used_fallback,
                ));
            }
            lambda *= 0.5;
        }
    }

    /// `-A - β D4 u + c D2 u - g(u)` on the interior nodes.
    fn residual_multiplier(
        &self,
        v: &[f64],
        u_n: &[f64],
        delta: f64,
        next: &Evaluated,
    ) -> Vec<f64> {
        let ops = &self.operators;
        let c = self.stretch_coefficient(&next.state);
        let d4 = ops.fourth_derivative(v);
        let d2 = ops.laplacian(v);
        let g = &self.force_model.nodal(&next.field)[1..self.grid().n];
        (0..v.len())
            .map(|i| {
                -(v[i] - u_n[i]) / delta - self.physical.beta * d4[i] + c * d2[i] - g[i]
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        prev: &Evaluated,
        next: Evaluated,
        v: &[f64],
        u_n: &[f64],
        zeta_interior: &[f64],
        delta: f64,
        dissipation: f64,
        excess: f64,
        fp_iters: usize,
        as_iters: usize,
        backtrack: f64,
        used_fallback: bool,
    ) -> StepResult {
        let grid = self.grid();
        let h = self.physical.gap;
        let eps = self.numerical.eps_gap;
        let n = grid.n;
        let mut multiplier = vec![0.0; n + 1];
        multiplier[1..n].copy_from_slice(zeta_interior);
        let velocity: Vec<f64> = next
            .state
            .values
            .iter()
            .zip(&prev.state.values)
            .map(|(a, b)| (a - b) / delta)
            .collect();
        let values = &next.state.values;
        let coincidence: Vec<bool> = values.iter().map(|&u| u + h <= eps).collect();
        let complementarity = multiplier
            .iter()
            .zip(values)
            .fold(0.0_f64, |m, (z, u)| m.max((z * (u + h)).abs()));
        let sign_violation = multiplier.iter().fold(0.0_f64, |m, &z| m.max(z));
        let support_violation = multiplier
            .iter()
            .zip(&coincidence)
            .filter(|(_, &c)| !c)
            .fold(0.0_f64, |m, (z, _)| m.max(z.abs()));
        let residual = self.residual_multiplier(v, u_n, delta, &next);
        let stationarity = residual
            .iter()
            .zip(zeta_interior)
            .fold(0.0_f64, |m, (r, z)| m.max((r - z).abs()));
        StepResult {
            state: next.state.clone(),
            multiplier,
            velocity,
            energy: next.energy,
            dissipation,
            fp_iters,
            as_iters,
            decrease_excess: excess,
            decrease_ok: excess <= self.numerical.tol_fp,
            complementarity,
            sign_violation,
            support_violation,
            stationarity,
            backtrack,
            used_fallback,
            coincidence,
            evaluated: next,
        }
    }

    fn summary(
        &self,
        index: usize,
        t: f64,
        ev: &Evaluated,
        step: Option<&StepResult>,
        dissipation_cum: f64,
    ) -> StepSummary {
        let state = &ev.state;
        let grid = state.grid;
        let h = self.physical.gap;
        let (l2, _, d2) = h2_seminorms(state);
        let (l2_sq, d2_sq) = (l2 * l2, d2 * d2);
        let support_extent = step.and_then(|s| {
            s.multiplier
                .iter()
                .enumerate()
                .filter(|(_, z)| **z != 0.0)
                .map(|(i, _)| grid.x(i).abs())
                .reduce(f64::max)
        });
        StepSummary {
            index,
            t,
            energy: ev.energy,
            dissipation_step: step.map_or(0.0, |s| s.dissipation),
            dissipation_cum,
            min_gap: state.min() + h,
            coincidence_count: state
                .values
                .iter()
                .filter(|&&u| u + h <= self.numerical.eps_gap)
                .count(),
            multiplier_mass: step.map_or(0.0, |s| s.multiplier_mass()),
            fp_iters: step.map_or(0, |s| s.fp_iters),
            as_iters: step.map_or(0, |s| s.as_iters),
            l2_sq,
            d2_sq,
            h2_norm: h2_norm(state),
            decrease_excess: step.map_or(0.0, |s| s.decrease_excess),
            complementarity: step.map_or(0.0, |s| s.complementarity),
            sign_violation: step.map_or(0.0, |s| s.sign_violation),
            support_violation: step.map_or(0.0, |s| s.support_violation),
            stationarity: step.map_or(0.0, |s| s.stationarity),
            backtrack: step.map_or(1.0, |s| s.backtrack),
            used_fallback: step.is_some_and(|s| s.used_fallback),
            support_extent,
        }
    }

    pub fn run(
        &self,
        u0: &BeamState,
        delta: f64,
        t_end: f64,
        opts: &RunOptions,
    ) -> Result<SimulationTrace, RunError> {
        self.run_with(u0, delta, t_end, opts, |_, _| {})
    }

    /// Runs the scheme, calling `observe(n, step)` after every accepted step.
    pub fn run_with(
        &self,
        u0: &BeamState,
        delta: f64,
        t_end: f64,
        opts: &RunOptions,
        mut observe: impl FnMut(usize, &StepResult),
    ) -> Result<SimulationTrace, RunError> {
        let mut trace = SimulationTrace {
            delta,
            constants: self.constants,
            steps: Vec::new(),
            snapshots: Vec::new(),
            warnings: Vec::new(),
            coincidence_onset: None,
        };
        if delta > self.constants.delta0 {
            trace.warnings.push(format!(
                "delta = {delta:e} exceeds delta0 = {:e}",
                self.constants.delta0
            ));
        }
        let fail = |trace: SimulationTrace, step, source| RunError {
            step,
            trace: Box::new(trace),
            source,
        };
        let mut current = match self.evaluate(u0) {
            Ok(ev) => ev,
            Err(e) => return Err(fail(trace, 0, e)),
        };
        trace.steps.push(self.summary(0, 0.0, &current, None, 0.0));
        trace.snapshots.push(Snapshot {
            index: 0,
            t: 0.0,
            state: u0.clone(),
            multiplier: vec![0.0; u0.values.len()],
        });
        if trace.steps[0].coincidence_count > 0 {
            trace.coincidence_onset = Some(0);
        }
        let n_steps = ((t_end / delta) - 1e-9).ceil().max(0.0) as usize;
        let mut cum = 0.0;
        let mut last_multiplier = vec![0.0; u0.values.len()];
        for n in 1..=n_steps {
            let step = match self.step_from(&current, delta) {
                Ok(s) => s,
                Err(e) => {
                    push_last(&mut trace, &current, &last_multiplier);
                    return Err(fail(trace, n, e));
                }
            };
            cum += step.dissipation;
            let t = n as f64 * delta;
            let row = self.summary(n, t, &step.evaluated, Some(&step), cum);
            if trace.coincidence_onset.is_none() && row.coincidence_count > 0 {
                trace.coincidence_onset = Some(n);
            }
            trace.steps.push(row);
            observe(n, &step);
            if opts.keep_every > 0 && n % opts.keep_every == 0 {
                trace.snapshots.push(Snapshot {
                    index: n,
                    t,
                    state: step.state.clone(),
                    multiplier: step.multiplier.clone(),
                });
            }
            last_multiplier = step.multiplier;
            current = step.evaluated;
        }
        push_last(&mut trace, &current, &last_multiplier);
        Ok(trace)
    }
}

fn push_last(trace: &mut SimulationTrace, current: &Evaluated, multiplier: &[f64]) {
    let last = trace.steps.last().expect("initial row");
    if trace.snapshots.last().map(|s| s.index) != Some(last.index) {
        trace.snapshots.push(Snapshot {
            index: last.index,
            t: last.t,
            state: current.state.clone(),
            multiplier: multiplier.to_vec(),
        });
    }
}
