//! Potential on `Omega(u)`: the dielectric layer below `z = -H` and the gap
//! between the layer and the deflected plate above it.
//!
//! Both subdomains share the beam's x-columns. The layer is a fixed tensor
//! grid; the gap is the reference rectangle `[-L, L] x [0, 1]` mapped column
//! by column through `z = -H + eta * g(x)`, `g = u + H`. The discretization is
//! the bilinear (isoparametric) Galerkin form of the pulled-back problem, so
//! the metric factor `1/g` and the `x`/`eta` cross terms enter through the
//! Jacobian of the map. Interface nodes are shared unknowns on free columns,
//! which makes continuity exact and flux matching the natural condition of
//! the weak form. Columns with `g < eps_gap` are in contact: their gap strip
//! is removed and the interface node carries the plate potential.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam::{BeamGrid, BeamState};
use crate::dielectric::{BoundaryDataModel, LayerGeometry, PermittivityModel};
use crate::linalg::{norm_inf, BandedSpd, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransmissionError {
    #[error("singular transmission system ({source}); {diagnostics}")]
    Singular {
        source: LinalgError,
        diagnostics: String,
    },
    #[error("linear residual {residual:e} above tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Free,
    Touching,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub n_z_layer: usize,
    pub n_eta_gap: usize,
    pub eps_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeMesh {
    pub grid: BeamGrid,
    pub geometry: LayerGeometry,
    pub n_z: usize,
    pub n_eta: usize,
    pub eps_gap: f64,
    pub deflection: Vec<f64>,
    /// Column heights `g_i = u_i + H`.
    pub heights: Vec<f64>,
    pub columns: Vec<ColumnKind>,
}

pub fn build_mesh(state: &BeamState, geometry: LayerGeometry, spec: MeshSpec) -> CompositeMesh {
    let heights: Vec<f64> = state.values.iter().map(|u| u + geometry.gap).collect();
    let columns = heights
        .iter()
        .map(|&g| {
            if g < spec.eps_gap {
                ColumnKind::Touching
            } else {
                ColumnKind::Free
            }
        })
        .collect();
    CompositeMesh {
        grid: state.grid,
        geometry,
        n_z: spec.n_z_layer,
        n_eta: spec.n_eta_gap,
        eps_gap: spec.eps_gap,
        deflection: state.values.clone(),
        heights,
        columns,
    }
}

impl CompositeMesh {
    /// Nodes per column: layer levels `0..=n_z`, gap levels `n_z+1..=n_z+n_eta`.
    pub fn levels(&self) -> usize {
        self.n_z + self.n_eta + 1
    }

    pub fn top(&self) -> usize {
        self.n_z + self.n_eta
    }

    pub fn node(&self, i: usize, level: usize) -> usize {
        i * self.levels() + level
    }

    pub fn node_count(&self) -> usize {
        (self.grid.n + 1) * self.levels()
    }

    pub fn layer_spacing(&self) -> f64 {
        self.geometry.thickness / self.n_z as f64
    }

    pub fn eta_spacing(&self) -> f64 {
        1.0 / self.n_eta as f64
    }

    pub fn is_touching(&self, i: usize) -> bool {
        self.columns[i] == ColumnKind::Touching
    }

    pub fn touching_count(&self) -> usize {
        self.columns
            .iter()
            .filter(|&&c| c == ColumnKind::Touching)
            .count()
    }

    pub fn coords(&self, i: usize, level: usize) -> (f64, f64) {
        let x = self.grid.x(i);
        let z = if level <= self.n_z {
            self.geometry.layer_bottom() + level as f64 * self.layer_spacing()
        } else {
            let eta = (level - self.n_z) as f64 * self.eta_spacing();
            -self.geometry.gap + eta * self.heights[i]
        };
        (x, z)
    }

    fn is_dirichlet(&self, i: usize, level: usize) -> bool {
        i == 0
            || i == self.grid.n
            || level == 0
            || level == self.top()
            || (self.is_touching(i) && level >= self.n_z)
    }

    fn cell_active(&self, i: usize, level: usize) -> bool {
        level < self.n_z || !(self.is_touching(i) && self.is_touching(i + 1))
    }
}

/// Boundary values and volume sources of a transmission problem on a mesh.
pub trait TransmissionData {
    fn dirichlet(&self, mesh: &CompositeMesh, i: usize, level: usize) -> f64;
    fn source(&self, _x: f64, _z: f64, _in_layer: bool) -> Option<f64> {
        None
    }
}

/// The physical problem: `V` on the plate, `h_u` on the outer boundary and on
/// the collapsed gap of contact columns.
pub struct PlateData<'a> {
    pub bdata: &'a BoundaryDataModel,
}

impl TransmissionData for PlateData<'_> {
    fn dirichlet(&self, mesh: &CompositeMesh, i: usize, level: usize) -> f64 {
        // On contact columns the interface value is `h_u(x, -H)`, which is
        // exactly `V` when the plate rests on the layer and varies smoothly
        // for heights below the contact threshold.
        if level == mesh.top() {
            return self.bdata.potential();
        }
        let (x, z) = mesh.coords(i, level);
        let w = mesh.deflection[i];
        if level <= mesh.n_z {
            self.bdata.h1(x, z, w)
        } else {
            self.bdata.h2(x, z, w)
        }
    }
}

const GAUSS: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// One quadrature sample of the energy density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensitySample {
    pub x: f64,
    pub z: f64,
    /// Quadrature weight times Jacobian determinant.
    pub weight: f64,
    pub sigma: f64,
    pub grad_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub unknowns: usize,
    pub bandwidth: usize,
    pub residual: f64,
    pub refinements: usize,
}

#[derive(Debug, Clone)]
pub struct PotentialSolution {
    pub mesh: CompositeMesh,
    /// Nodal values, column-major (`mesh.node(i, level)`).
    pub values: Vec<f64>,
    pub energy_density: Vec<DensitySample>,
    pub stats: SolveStats,
}

impl PotentialSolution {
    pub fn at(&self, i: usize, level: usize) -> f64 {
        self.values[self.mesh.node(i, level)]
    }

    /// `psi_1` on the layer grid, `(n_x + 1) x (n_z + 1)`.
    pub fn psi1(&self) -> Vec<Vec<f64>> {
        (0..=self.mesh.grid.n)
            .map(|i| (0..=self.mesh.n_z).map(|j| self.at(i, j)).collect())
            .collect()
    }

    /// `phi(x, eta)` on the reference gap grid, `(n_x + 1) x (n_eta + 1)`.
    pub fn phi2(&self) -> Vec<Vec<f64>> {
        (0..=self.mesh.grid.n)
            .map(|i| (0..=self.mesh.n_eta).map(|k| self.at(i, self.mesh.n_z + k)).collect())
            .collect()
    }
}

/// Geometry of one bilinear cell evaluated at a quadrature point.
struct CellPoint {
    x: f64,
    z: f64,
    det: f64,
    shape: [f64; 4],
    grad: [[f64; 2]; 4],
}

fn cell_nodes(i: usize, level: usize) -> [(usize, usize); 4] {
    [(i, level), (i + 1, level), (i + 1, level + 1), (i, level + 1)]
}

fn cell_points(corners: &[(f64, f64); 4]) -> impl Iterator<Item = CellPoint> + '_ {
    GAUSS.iter().flat_map(move |&xi| {
        GAUSS.iter().map(move |&ze| {
            let shape = [(1.0 - xi) * (1.0 - ze), xi * (1.0 - ze), xi * ze, (1.0 - xi) * ze];
            let d_xi = [-(1.0 - ze), 1.0 - ze, ze, -ze];
            let d_ze = [-(1.0 - xi), -xi, xi, 1.0 - xi];
            let (mut x, mut z) = (0.0, 0.0);
            let (mut x_xi, mut x_ze, mut z_xi, mut z_ze) = (0.0, 0.0, 0.0, 0.0);
            for a in 0..4 {
                let (cx, cz) = corners[a];
                x += shape[a] * cx;
                z += shape[a] * cz;
                x_xi += d_xi[a] * cx;
                x_ze += d_ze[a] * cx;
                z_xi += d_xi[a] * cz;
                z_ze += d_ze[a] * cz;
            }
            let det = x_xi * z_ze - z_xi * x_ze;
            let mut grad = [[0.0; 2]; 4];
            for a in 0..4 {
                grad[a] = [
                    (z_ze * d_xi[a] - z_xi * d_ze[a]) / det,
                    (-x_ze * d_xi[a] + x_xi * d_ze[a]) / det,
                ];
            }
            CellPoint {
                x,
                z,
                det,
                shape,
                grad,
            }
        })
    })
}

fn cell_sigma(perm: &PermittivityModel, level: usize, n_z: usize, x: f64, z: f64) -> f64 {
    if level < n_z {
        perm.sigma1(x, z)
    } else {
        perm.sigma2
    }
}

fn for_each_cell(mesh: &CompositeMesh, mut f: impl FnMut(usize, usize)) {
    for i in 0..mesh.grid.n {
        for level in 0..mesh.top() {
            if mesh.cell_active(i, level) {
                f(i, level);
            }
        }
    }
}

/// Physical problem with the Example-style boundary data.
pub fn solve(
    mesh: &CompositeMesh,
    perm: &PermittivityModel,
    bdata: &BoundaryDataModel,
    tol: f64,
) -> Result<PotentialSolution, TransmissionError> {
    solve_with(mesh, perm, &PlateData { bdata }, tol)
}

/// General transmission problem `-div(sigma grad psi) = f` with Dirichlet data
/// supplied by `data`; the linear residual is driven below `tol (1 + |rhs|)`.
pub fn solve_with(
    mesh: &CompositeMesh,
    perm: &PermittivityModel,
    data: &dyn TransmissionData,
    tol: f64,
) -> Result<PotentialSolution, TransmissionError> {
    let levels = mesh.levels();
    let total = mesh.node_count();
    let mut id = vec![usize::MAX; total];
    let mut values = vec![0.0; total];
    let mut unknowns = 0;
    for i in 0..=mesh.grid.n {
        for level in 0..levels {
            let k = mesh.node(i, level);
            if mesh.is_dirichlet(i, level) {
                values[k] = data.dirichlet(mesh, i, level);
            } else {
                id[k] = unknowns;
                unknowns += 1;
            }
        }
    }

    let mut bw = 0;
    for_each_cell(mesh, |i, level| {
        let ids: Vec<usize> = cell_nodes(i, level)
            .iter()
            .map(|&(a, l)| id[mesh.node(a, l)])
            .filter(|&v| v != usize::MAX)
            .collect();
        if let (Some(lo), Some(hi)) = (ids.iter().min(), ids.iter().max()) {
            bw = bw.max(hi - lo);
        }
    });

    let mut a = BandedSpd::zeros(unknowns, bw);
    let mut rhs = vec![0.0; unknowns];
    for_each_cell(mesh, |i, level| {
        let nodes = cell_nodes(i, level);
        let corners = nodes.map(|(a, l)| mesh.coords(a, l));
        let mut ke = [[0.0; 4]; 4];
        let mut fe = [0.0; 4];
        for p in cell_points(&corners) {
            let s = cell_sigma(perm, level, mesh.n_z, p.x, p.z);
            let w = 0.25 * p.det;
            for r in 0..4 {
                for c in 0..4 {
                    ke[r][c] += w * s * (p.grad[r][0] * p.grad[c][0] + p.grad[r][1] * p.grad[c][1]);
                }
            }
            if let Some(f) = data.source(p.x, p.z, level < mesh.n_z) {
                for r in 0..4 {
                    fe[r] += w * f * p.shape[r];
                }
            }
        }
        let gk = nodes.map(|(a, l)| mesh.node(a, l));
        for r in 0..4 {
            let ir = id[gk[r]];
            if ir == usize::MAX {
                continue;
            }
            rhs[ir] += fe[r];
            for c in 0..4 {
                let ic = id[gk[c]];
                if ic == usize::MAX {
                    rhs[ir] -= ke[r][c] * values[gk[c]];
                } else if ic <= ir {
                    a.add(ir, ic, ke[r][c]);
                }
            }
        }
    });

    let original = a.clone();
    let chol = a.factor().map_err(|source| TransmissionError::Singular {
        source,
        diagnostics: format!(
            "{} unknowns, bandwidth {bw}, {} touching columns, min height {:e}",
            unknowns,
            mesh.touching_count(),
            mesh.heights.iter().copied().fold(f64::INFINITY, f64::min)
        ),
    })?;
    let singular = |source| TransmissionError::Singular {
        source,
        diagnostics: String::new(),
    };
    let mut x = chol.solve(&rhs).map_err(singular)?;
    let tolerance = tol * (1.0 + norm_inf(&rhs));
    let mut residual_vec = residual(&original, &x, &rhs);
    let mut refinements = 0;
    while norm_inf(&residual_vec) > tolerance && refinements < 3 {
        let dx = chol.solve(&residual_vec).map_err(singular)?;
        x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
        residual_vec = residual(&original, &x, &rhs);
        refinements += 1;
    }
    let res = norm_inf(&residual_vec);
    if res > tolerance {
        return Err(TransmissionError::Residual {
            residual: res,
            tolerance,
        });
    }
    for (k, &slot) in id.iter().enumerate() {
        if slot != usize::MAX {
            values[k] = x[slot];
        }
    }

    let energy_density = density_samples(mesh, perm, &values);
    Ok(PotentialSolution {
        mesh: mesh.clone(),
        values,
        energy_density,
        stats: SolveStats {
            unknowns,
            bandwidth: bw,
            residual: res,
            refinements,
        },
    })
}

fn residual(a: &BandedSpd, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.mul_vec(x);
    b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
}

fn density_samples(mesh: &CompositeMesh, perm: &PermittivityModel, values: &[f64]) -> Vec<DensitySample> {
    let mut out = Vec::new();
    for_each_cell(mesh, |i, level| {
        let nodes = cell_nodes(i, level);
        let corners = nodes.map(|(a, l)| mesh.coords(a, l));
        let psi = nodes.map(|(a, l)| values[mesh.node(a, l)]);
        for p in cell_points(&corners) {
            let (mut gx, mut gz) = (0.0, 0.0);
            for a in 0..4 {
                gx += psi[a] * p.grad[a][0];
                gz += psi[a] * p.grad[a][1];
            }
            out.push(DensitySample {
                x: p.x,
                z: p.z,
                weight: 0.25 * p.det,
                sigma: cell_sigma(perm, level, mesh.n_z, p.x, p.z),
                grad_sq: gx * gx + gz * gz,
            });
        }
    });
    out
}

/// `psi^T K psi` with the element matrices assembled over every node,
/// Dirichlet nodes included.
pub fn bilinear_form(sol: &PotentialSolution, perm: &PermittivityModel) -> f64 {
    let mesh = &sol.mesh;
    let mut total = 0.0;
    for_each_cell(mesh, |i, level| {
        let nodes = cell_nodes(i, level);
        let corners = nodes.map(|(a, l)| mesh.coords(a, l));
        let psi = nodes.map(|(a, l)| sol.values[mesh.node(a, l)]);
        let mut ke = [[0.0; 4]; 4];
        for p in cell_points(&corners) {
            let s = cell_sigma(perm, level, mesh.n_z, p.x, p.z);
            for r in 0..4 {
                for c in 0..4 {
                    ke[r][c] +=
                        0.25 * p.det * s * (p.grad[r][0] * p.grad[c][0] + p.grad[r][1] * p.grad[c][1]);
                }
            }
        }
        for r in 0..4 {
            for c in 0..4 {
                total += psi[r] * ke[r][c] * psi[c];
            }
        }
    });
    total
}

/// `L2` distance between the discrete potential (bilinear on each cell) and
/// `exact`, by the same Gauss rule as the assembly.
pub fn l2_error(sol: &PotentialSolution, exact: impl Fn(f64, f64) -> f64) -> f64 {
    let mesh = &sol.mesh;
    let mut sum = 0.0;
    for_each_cell(mesh, |i, level| {
        let nodes = cell_nodes(i, level);
        let corners = nodes.map(|(a, l)| mesh.coords(a, l));
        let psi = nodes.map(|(a, l)| sol.values[mesh.node(a, l)]);
        for p in cell_points(&corners) {
            let uh: f64 = (0..4).map(|a| p.shape[a] * psi[a]).sum();
            sum += 0.25 * p.det * (uh - exact(p.x, p.z)).powi(2);
        }
    });
    sum.sqrt()
}

/// Exact derivative of the discrete energy `-1/2 psi^T K psi` with respect to
/// each nodal deflection `u_i` (zero at the clamped ends).
///
/// Moving `u_i` drags the gap nodes of column `i` (vertical velocity `eta`)
/// and, on contact columns, changes their Dirichlet values. Because `psi`
/// minimizes the quadratic form, the free-node variation drops out and no
/// extra solve is needed.
pub fn energy_gradient(
    sol: &PotentialSolution,
    perm: &PermittivityModel,
    bdata: &BoundaryDataModel,
) -> Vec<f64> {
    let mesh = &sol.mesh;
    let n = mesh.grid.n;
    let mut grad = vec![0.0; n + 1];
    let mut reaction = vec![0.0; mesh.node_count()];
    let eta_of = |level: usize| (level - mesh.n_z) as f64 * mesh.eta_spacing();
    for_each_cell(mesh, |i, level| {
        let nodes = cell_nodes(i, level);
        let corners = nodes.map(|(a, l)| mesh.coords(a, l));
        let psi = nodes.map(|(a, l)| sol.values[mesh.node(a, l)]);
        let mut kpsi = [0.0; 4];
        let mut dz = [0.0; 4];
        for p in cell_points(&corners) {
            let s = cell_sigma(perm, level, mesh.n_z, p.x, p.z);
            let w = 0.25 * p.det * s;
            let (mut gx, mut gz) = (0.0, 0.0);
            for a in 0..4 {
                gx += psi[a] * p.grad[a][0];
                gz += psi[a] * p.grad[a][1];
            }
            let sq = gx * gx + gz * gz;
            for a in 0..4 {
                let dot = p.grad[a][0] * gx + p.grad[a][1] * gz;
                kpsi[a] += w * dot;
                dz[a] += w * (sq * p.grad[a][1] - 2.0 * dot * gz);
            }
        }
        for a in 0..4 {
            let (col, l) = nodes[a];
            reaction[mesh.node(col, l)] += kpsi[a];
            if l > mesh.n_z && col > 0 && col < n {
                grad[col] -= 0.5 * eta_of(l) * dz[a];
            }
        }
    });
    for i in 1..n {
        if !mesh.is_touching(i) {
            continue;
        }
        let w = mesh.deflection[i];
        for level in mesh.n_z..mesh.top() {
            let (x, z) = mesh.coords(i, level);
            let [_, hz, hw] = if level == mesh.n_z {
                bdata.grad_h1(x, z, w)
            } else {
                bdata.grad_h2(x, z, w)
            };
            let dpsi = eta_of(level) * hz + hw;
            grad[i] -= reaction[mesh.node(i, level)] * dpsi;
        }
    }
    grad
}

/// Vertical derivatives consumed by the force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnTrace {
    /// `dz psi_2` at the plate; `None` on contact columns.
    pub plate: Option<f64>,
    /// `dz psi_1` at `z = -H` from the layer side.
    pub interface: f64,
}

/// One-sided second-order differences at the plate (rescaled by `1/g`) and
/// at the top of the layer.
pub fn traces(sol: &PotentialSolution) -> Vec<ColumnTrace> {
    let m = &sol.mesh;
    let hz = m.layer_spacing();
    let he = m.eta_spacing();
    let (nz, top) = (m.n_z, m.top());
    (0..=m.grid.n)
        .map(|i| {
            let interface =
                (3.0 * sol.at(i, nz) - 4.0 * sol.at(i, nz - 1) + sol.at(i, nz - 2)) / (2.0 * hz);
            let plate = (!m.is_touching(i)).then(|| {
                (3.0 * sol.at(i, top) - 4.0 * sol.at(i, top - 1) + sol.at(i, top - 2))
                    / (2.0 * he * m.heights[i])
            });
            ColumnTrace { plate, interface }
        })
        .collect()
}
