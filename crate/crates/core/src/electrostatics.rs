//! Electrostatic energy and force on the plate computed from the potential.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam::{first_difference, BeamState};
use crate::dielectric::{BoundaryDataModel, PermittivityModel};
use crate::transmission::{
    build_mesh, energy_gradient, solve, traces, ColumnKind, MeshSpec, PotentialSolution, TransmissionError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElectrostaticsError {
    #[error(transparent)]
    Transmission(#[from] TransmissionError),
    #[error("perturbed state at s = {s} leaves the admissible set (min u = {min_u})")]
    Inadmissible { s: f64, min_u: f64 },
}

/// Force per unit length on the beam nodes with the branch used at each node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceProfile {
    pub values: Vec<f64>,
    pub branch: Vec<ColumnKind>,
}

/// `-1/2 sum sigma |grad psi|^2` over the cached quadrature samples.
pub fn electrostatic_energy(sol: &PotentialSolution) -> f64 {
    -0.5 * sol
        .energy_density
        .iter()
        .map(|s| s.weight * s.sigma * s.grad_sq)
        .sum::<f64>()
}

pub fn force(sol: &PotentialSolution, state: &BeamState, perm: &PermittivityModel) -> ForceProfile {
    let slope = first_difference(state);
    let mesh = &sol.mesh;
    let zi = mesh.geometry.interface();
    let s2 = perm.sigma2;
    let values = traces(sol)
        .iter()
        .enumerate()
        .map(|(i, t)| match t.plate {
            Some(dz) => 0.5 * s2 * (1.0 + slope[i] * slope[i]) * dz * dz,
            None => {
                let s1 = perm.sigma1(mesh.grid.x(i), zi);
                s1 * s1 / (2.0 * s2) * t.interface * t.interface
            }
        })
        .collect();
    ForceProfile {
        values,
        branch: mesh.columns.clone(),
    }
}

/// Permittivity, boundary data and discretization settings needed to turn a
/// deflection into a potential.
#[derive(Debug, Clone)]
pub struct Electrostatics {
    pub perm: PermittivityModel,
    pub bdata: BoundaryDataModel,
    pub mesh: MeshSpec,
    pub tol: f64,
}

/// Potential, energy and force for one deflection.
#[derive(Debug, Clone)]
pub struct FieldEvaluation {
    pub solution: PotentialSolution,
    pub energy: f64,
    pub force: ForceProfile,
    /// `W^{-1} dE_e/du`: the force that is exactly consistent with the
    /// discrete energy (trapezoid pairing, zero at the clamped ends).
    pub consistent_force: Vec<f64>,
}

impl Electrostatics {
    pub fn potential(&self, state: &BeamState) -> Result<PotentialSolution, TransmissionError> {
        let mesh = build_mesh(state, self.perm.geometry, self.mesh);
        solve(&mesh, &self.perm, &self.bdata, self.tol)
    }

    pub fn evaluate(&self, state: &BeamState) -> Result<FieldEvaluation, TransmissionError> {
        let solution = self.potential(state)?;
        let energy = electrostatic_energy(&solution);
        let force = force(&solution, state, &self.perm);
        let weights = state.grid.weights();
        let consistent_force = energy_gradient(&solution, &self.perm, &self.bdata)
            .iter()
            .zip(&weights)
            .map(|(g, w)| g / w)
            .collect();
        Ok(FieldEvaluation {
            solution,
            energy,
            force,
            consistent_force,
        })
    }

    pub fn energy(&self, state: &BeamState) -> Result<f64, TransmissionError> {
        Ok(electrostatic_energy(&self.potential(state)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionalRow {
    pub s: f64,
    pub quotient: f64,
    pub pairing: f64,
    pub relative_error: f64,
}

/// Compares `(E_e(u + s(w - u)) - E_e(u)) / s` with `int g(u) (w - u)` for
/// each `s`.
pub fn directional_derivative_check(
    es: &Electrostatics,
    u: &BeamState,
    w: &BeamState,
    s_list: &[f64],
) -> Result<Vec<DirectionalRow>, ElectrostaticsError> {
    let gap = es.perm.geometry.gap;
    let base = es.evaluate(u)?;
    let dir: Vec<f64> = w.values.iter().zip(&u.values).map(|(a, b)| a - b).collect();
    let prod: Vec<f64> = base.force.values.iter().zip(&dir).map(|(g, d)| g * d).collect();
    let pairing = u.grid.integrate(&prod);
    s_list
        .iter()
        .map(|&s| {
            let moved = BeamState::new(
                u.grid,
                u.values.iter().zip(&dir).map(|(a, d)| a + s * d).collect(),
            );
            if !moved.is_admissible(gap) {
                return Err(ElectrostaticsError::Inadmissible {
                    s,
                    min_u: moved.min(),
                });
            }
            let quotient = (es.energy(&moved)? - base.energy) / s;
            let relative_error = if pairing == 0.0 {
                quotient.abs()
            } else {
                (quotient - pairing).abs() / pairing.abs()
            };
            Ok(DirectionalRow {
                s,
                quotient,
                pairing,
                relative_error,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::BeamGrid;
    use crate::dielectric::{layered_lift_model, LayerGeometry, Sigma1Profile};

    fn es(s1: f64, s2: f64, v: f64, n: usize) -> Electrostatics {
        let geom = LayerGeometry {
            half_width: 1.0,
            gap: 1.0,
            thickness: 1.0,
        };
        let perm =
            PermittivityModel::from_profile(Sigma1Profile::Constant { value: s1 }, s2, geom)
                .unwrap();
        let bdata = layered_lift_model(&perm, v).unwrap();
        Electrostatics {
            perm,
            bdata,
            mesh: MeshSpec {
                n_z_layer: n,
                n_eta_gap: n,
                eps_gap: 1e-6,
            },
            tol: 1e-12,
        }
    }

    #[test]
    fn flat_plate_energy_and_force() {
        let e = es(1.0, 2.0, 2.0, 8);
        let u = BeamState::zeros(BeamGrid::new(1.0, 16));
        let ev = e.evaluate(&u).unwrap();
        assert!((ev.energy + 8.0 / 3.0).abs() < 1e-10, "{}", ev.energy);
        assert!(ev.force.values.iter().all(|g| (g - 4.0 / 9.0).abs() < 1e-10));
    }

    #[test]
    fn single_material_force() {
        let e = es(1.0, 1.0, 1.0, 8);
        let u = BeamState::zeros(BeamGrid::new(1.0, 16));
        let f = e.evaluate(&u).unwrap().force;
        assert!(f.values.iter().all(|g| (g - 0.125).abs() < 1e-10));
    }

    #[test]
    fn energy_is_quadratic_in_the_potential() {
        let u = BeamState::from_fn(BeamGrid::new(1.0, 16), |_| -0.3);
        let e1 = es(1.0, 2.0, 1.0, 6).energy(&u).unwrap();
        let e2 = es(1.0, 2.0, 2.0, 6).energy(&u).unwrap();
        assert!((e2 - 4.0 * e1).abs() < 1e-12);
        let zero = es(1.0, 2.0, 0.0, 6);
        assert_eq!(zero.energy(&u).unwrap(), 0.0);
    }

    #[test]
    fn force_is_non_negative_with_contact() {
        let e = es(2.0, 1.0, 3.0, 8);
        let g = BeamGrid::new(1.0, 32);
        let u = BeamState::from_fn(g, |x| (-1.6 * (1.0 - x * x).powi(2)).max(-1.0));
        let f = e.evaluate(&u).unwrap().force;
        assert!(f.branch.contains(&ColumnKind::Touching));
        assert!(f.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn zero_direction_gives_zero() {
        let e = es(1.0, 2.0, 2.0, 6);
        let u = BeamState::clamped_bump(BeamGrid::new(1.0, 16), -0.2);
        let rows = directional_derivative_check(&e, &u, &u, &[1e-3]).unwrap();
        assert_eq!(rows[0].pairing, 0.0);
        assert_eq!(rows[0].quotient, 0.0);
    }

    #[test]
    fn inadmissible_perturbation_is_an_error() {
        let e = es(1.0, 2.0, 2.0, 6);
        let g = BeamGrid::new(1.0, 16);
        let u = BeamState::zeros(g);
        let w = BeamState::clamped_bump(g, -3.0);
        assert!(matches!(
            directional_derivative_check(&e, &u, &w, &[1.0]),
            Err(ElectrostaticsError::Inadmissible { .. })
        ));
    }

    fn consistent_pairing_vs_central_difference(e: &Electrostatics, u: &BeamState, dir: &[f64]) {
        let ev = e.evaluate(u).unwrap();
        let prod: Vec<f64> = ev.consistent_force.iter().zip(dir).map(|(g, d)| g * d).collect();
        let pairing = u.grid.integrate(&prod);
        let s = 1e-5;
        let shifted = |t: f64| {
            let v = u.values.iter().zip(dir).map(|(a, d)| a + t * d).collect();
            e.energy(&BeamState::new(u.grid, v)).unwrap()
        };
        let fd = (shifted(s) - shifted(-s)) / (2.0 * s);
        assert!(
            (fd - pairing).abs() <= 1e-6 * pairing.abs().max(1e-3),
            "fd {fd} pairing {pairing}"
        );
    }

    #[test]
    fn consistent_force_is_the_discrete_gradient() {
        let e = es(1.0, 2.0, 2.0, 6);
        let g = BeamGrid::new(1.0, 16);
        let u = BeamState::clamped_bump(g, -0.5);
        let dir: Vec<f64> = g.nodes().iter().map(|x| (1.0 - x * x) * (1.0 + x)).collect();
        consistent_pairing_vs_central_difference(&e, &u, &dir);
    }

    #[test]
    fn consistent_force_with_contact_columns() {
        let e = es(2.0, 1.0, 3.0, 6);
        let g = BeamGrid::new(1.0, 24);
        let u = BeamState::from_fn(g, |x| (-1.6 * (1.0 - x * x).powi(2)).max(-1.0));
        let ev = e.evaluate(&u).unwrap();
        assert!(ev.force.branch.contains(&ColumnKind::Touching));
        // Perturb free columns only, so no column changes branch.
        let dir: Vec<f64> = (0..=24)
            .map(|i| if u.values[i] > -0.99 { (1.0 - g.x(i).powi(2)) * 0.3 } else { 0.0 })
            .collect();
        consistent_pairing_vs_central_difference(&e, &u, &dir);
        // A touching column lifted within the contact threshold.
        let mid = 12;
        let ev_grad = ev.consistent_force[mid] * g.spacing();
        let s = 1e-8;
        let mut v = u.values.clone();
        v[mid] += s;
        let fd = (e.energy(&BeamState::new(g, v)).unwrap() - ev.energy) / s;
        assert!((fd - ev_grad).abs() <= 1e-4 * ev_grad.abs(), "{fd} vs {ev_grad}");
    }
}
