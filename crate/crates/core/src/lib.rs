//! Clamped elastic beam pulled toward a dielectric layer by an electrostatic
//! field: potential solver, energies, and an implicit Euler scheme with a
//! non-penetration constraint.

pub mod beam;
pub mod dielectric;
pub mod diagnostics;
pub mod electrostatics;
pub mod io;
pub mod linalg;
pub mod minimizing_movements;
pub mod model_config;
pub mod obstacle;
pub mod transmission;
