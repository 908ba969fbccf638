//! Finite-difference representation of the clamped deflection on `(-L, L)`.
//!
//! Nodes `x_i = -L + i h`, `i = 0..=n`. Clamping is imposed by `u_0 = u_n = 0`
//! together with mirror ghost values `u_{-1} = u_1`, `u_{n+1} = u_{n-1}`, which
//! encode a zero end slope. Derivatives use centered differences and every
//! integral is the trapezoid rule on nodal values.

use serde::{Deserialize, Serialize};

use crate::linalg::BandedSpd;
use crate::model_config::PhysicalParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamGrid {
    pub half_width: f64,
    pub n: usize,
}

impl BeamGrid {
    pub fn new(half_width: f64, n: usize) -> Self {
        assert!(n >= 2 && half_width > 0.0);
        Self { half_width, n }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n {
            self.half_width
        } else {
            -self.half_width + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.x(i)).collect()
    }

    /// Trapezoid weights `h/2, h, ..., h, h/2`.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.n + 1];
        w[0] = 0.5 * h;
        w[self.n] = 0.5 * h;
        w
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.n + 1);
        let h = self.spacing();
        let inner: f64 = f[1..self.n].iter().sum();
        h * (inner + 0.5 * (f[0] + f[self.n]))
    }

    pub fn interior(&self) -> usize {
        self.n - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamState {
    pub grid: BeamGrid,
    pub values: Vec<f64>,
}

impl BeamState {
    pub fn new(grid: BeamGrid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.n + 1, "one value per grid node");
        Self { grid, values }
    }

    pub fn zeros(grid: BeamGrid) -> Self {
        Self::new(grid, vec![0.0; grid.n + 1])
    }

    pub fn from_fn(grid: BeamGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    /// `amplitude * (1 - (x/L)^2)^2`, clamped at both ends.
    pub fn clamped_bump(grid: BeamGrid, amplitude: f64) -> Self {
        let l = grid.half_width;
        let mut s = Self::from_fn(grid, |x| amplitude * (1.0 - (x / l).powi(2)).powi(2));
        s.values[0] = 0.0;
        s.values[grid.n] = 0.0;
        s
    }

    pub fn is_clamped(&self) -> bool {
        self.values[0] == 0.0 && self.values[self.grid.n] == 0.0
    }

    /// Nodal obstacle constraint `u_i >= -H`, no tolerance.
    pub fn is_admissible(&self, gap: f64) -> bool {
        self.is_clamped() && self.values.iter().all(|&u| u >= -gap)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn interior_values(&self) -> &[f64] {
        &self.values[1..self.grid.n]
    }

    pub fn from_interior(grid: BeamGrid, interior: &[f64]) -> Self {
        assert_eq!(interior.len(), grid.interior());
        let mut values = Vec::with_capacity(grid.n + 1);
        values.push(0.0);
        values.extend_from_slice(interior);
        values.push(0.0);
        Self::new(grid, values)
    }
}

/// Nodal second differences, with ghost reflection at both ends.
pub fn second_difference(state: &BeamState) -> Vec<f64> {
    let n = state.grid.n;
    let h2 = state.grid.spacing().powi(2);
    let u = &state.values;
    let at = |i: isize| -> f64 {
        if i < 0 {
            u[(-i) as usize]
        } else if i as usize > n {
            u[2 * n - i as usize]
        } else {
            u[i as usize]
        }
    };
    (0..=n as isize)
        .map(|i| (at(i - 1) - 2.0 * at(i) + at(i + 1)) / h2)
        .collect()
}

/// Nodal centered first differences; zero at the ends by the ghost convention.
pub fn first_difference(state: &BeamState) -> Vec<f64> {
    let n = state.grid.n;
    let h = state.grid.spacing();
    let u = &state.values;
    (0..=n)
        .map(|i| {
            if i == 0 || i == n {
                0.0
            } else {
                (u[i + 1] - u[i - 1]) / (2.0 * h)
            }
        })
        .collect()
}

pub fn l2_norm_sq(grid: &BeamGrid, f: &[f64]) -> f64 {
    let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
    grid.integrate(&sq)
}

/// Trapezoid norms `(||u||, ||u'||, ||u''||)`.
pub fn h2_seminorms(state: &BeamState) -> (f64, f64, f64) {
    let g = &state.grid;
    (
        l2_norm_sq(g, &state.values).sqrt(),
        l2_norm_sq(g, &first_difference(state)).sqrt(),
        l2_norm_sq(g, &second_difference(state)).sqrt(),
    )
}

/// Full discrete `H^2` norm.
pub fn h2_norm(state: &BeamState) -> f64 {
    let (a, b, c) = h2_seminorms(state);
    (a * a + b * b + c * c).sqrt()
}

pub fn mechanical_energy(state: &BeamState, params: &PhysicalParams) -> f64 {
    let (_, d1, d2) = h2_seminorms(state);
    let (d1sq, d2sq) = (d1 * d1, d2 * d2);
    0.5 * params.beta * d2sq + (0.5 * params.tau + 0.25 * params.a * d1sq) * d1sq
}

/// Quadratic forms of the mechanical energy restricted to the interior
/// unknowns of a clamped state:
/// `||u''||^2 = v^T bending v`, `||u'||^2 = v^T stretching v`.
#[derive(Debug, Clone)]
pub struct BeamOperators {
    pub grid: BeamGrid,
    pub bending: BandedSpd,
    pub stretching: BandedSpd,
    /// Trapezoid weights of the interior nodes.
    pub mass: Vec<f64>,
}

impl BeamOperators {
    pub fn new(grid: BeamGrid) -> Self {
        let n = grid.n;
        let h = grid.spacing();
        let w = grid.weights();
        let m = grid.interior();
        // Each row: node weight and (interior index, coefficient) pairs.
        let mut bending = BandedSpd::zeros(m, 2);
        let mut stretching = BandedSpd::zeros(m, 2);
        let h2 = h * h;
        for r in 0..=n {
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(3);
            if r == 0 {
                row.push((0, 2.0 / h2));
            } else if r == n {
                row.push((m - 1, 2.0 / h2));
            } else {
                for (node, c) in [(r - 1, 1.0), (r, -2.0), (r + 1, 1.0)] {
                    if node >= 1 && node < n {
                        row.push((node - 1, c / h2));
                    }
                }
            }
            add_outer(&mut bending, w[r], &row);
            if r > 0 && r < n {
                let mut row = Vec::with_capacity(2);
                for (node, c) in [(r - 1, -1.0), (r + 1, 1.0)] {
                    if node >= 1 && node < n {
                        row.push((node - 1, c / (2.0 * h)));
                    }
                }
                add_outer(&mut stretching, w[r], &row);
            }
        }
        Self {
            grid,
            bending,
            stretching,
            mass: w[1..n].to_vec(),
        }
    }

    /// `W^{-1} bending v`: the discrete fourth derivative paired with the
    /// trapezoid rule.
    pub fn fourth_derivative(&self, v: &[f64]) -> Vec<f64> {
        let k = self.bending.mul_vec(v);
        k.iter().zip(&self.mass).map(|(a, w)| a / w).collect()
    }

    /// `-W^{-1} stretching v`: the energy-consistent second derivative.
    pub fn laplacian(&self, v: &[f64]) -> Vec<f64> {
        let k = self.stretching.mul_vec(v);
        k.iter().zip(&self.mass).map(|(a, w)| -a / w).collect()
    }
}

fn add_outer(a: &mut BandedSpd, weight: f64, row: &[(usize, f64)]) {
    for &(p, cp) in row {
        for &(q, cq) in row {
            if p >= q {
                a.add(p, q, weight * cp * cq);
            }
        }
    }
}
