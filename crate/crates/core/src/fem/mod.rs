//! Bilinear finite elements on structured rectilinear meshes.

mod assembly;
mod heat;
mod mesh;

pub use assembly::{
    boundary_load, boundary_mass, load_vector, lumped_mass, mass_matrix, stiffness_matrix, FinSystem,
    KappaPoissonSystem, QuadratureRule, FIN_PARAMS,
};
pub use heat::{CrankNicolson, HeatOperators, NonlinearHeatStep};
pub use mesh::{BoundaryEdge, Cell, EdgeTag, RectMesh};

use std::io::{self, Write};

use thiserror::Error;

use crate::autodiff::AdError;
use crate::sparse::SparseError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FemError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("expected a vector of length {expected}, got {found}")]
    Length { expected: usize, found: usize },
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Autodiff(#[from] AdError),
}

/// Writes a nodal field as `x,y,value` rows.
pub fn write_field_csv<W: Write>(mesh: &RectMesh, values: &[f64], mut out: W) -> io::Result<()> {
    if values.len() != mesh.n_nodes() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("field has {} values for {} nodes", values.len(), mesh.n_nodes()),
        ));
    }
    writeln!(out, "x,y,value")?;
    for (c, v) in mesh.coords().iter().zip(values) {
        writeln!(out, "{},{},{}", c[0], c[1], v)?;
    }
    Ok(())
}
