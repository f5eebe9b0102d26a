//! Finite-element solution of `div(sigma grad phi) = 0`.
//!
//! [`assemble`] builds the stiffness matrix of a mesh; [`DirichletSolver`]
//! eliminates a fixed node set, factors the reduced matrix once and serves any
//! number of boundary-value / source combinations against it.

mod assembly;
mod skyline;
mod solve;

pub use assembly::{assemble, StiffnessSystem};
pub use skyline::{SkylineCholesky, SkylineMatrix};
pub use solve::{interface_current, solve, DirichletSet, DirichletSolver, FieldSolution, LayerCurrent, RESIDUAL_TOL};

use std::io::Write;

use crate::error::Result;
use crate::mesh::Mesh;

/// Debug dump of a solution as `node,x,y,z,phi` rows.
pub fn write_potentials_csv<W: Write>(mesh: &Mesh, sol: &FieldSolution, mut w: W) -> Result<()> {
    use crate::io::fmt_g;
    writeln!(w, "node,x,y,z,phi")?;
    for (i, (p, v)) in mesh.nodes.iter().zip(&sol.potentials).enumerate() {
        writeln!(w, "{i},{},{},{},{}", fmt_g(p[0]), fmt_g(p[1]), fmt_g(p[2]), fmt_g(*v))?;
    }
    Ok(())
}
