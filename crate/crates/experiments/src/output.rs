//! Writers for the fixed per-run output files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use adjoint_pde_core::fem::{write_field_csv, RectMesh};

use crate::ExperimentError;

pub const LOSS_HISTORY: &str = "loss_history.csv";
pub const PARAMS_FINAL: &str = "params_final.json";
pub const SUMMARY: &str = "summary.json";
pub const OBSERVATIONS: &str = "observations.csv";

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>, ExperimentError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| ExperimentError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), ExperimentError> {
    fs::write(path, text).map_err(|e| ExperimentError::io(path, e))
}

/// CSV with a header line and one row per entry of `rows`.
pub(crate) fn write_table(dir: &Path, name: &str, header: &str, rows: &[Vec<f64>]) -> Result<String, ExperimentError> {
    let path = dir.join(name);
    let mut out = create(&path)?;
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "{header}")?;
        for row in rows {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()
    };
    write().map_err(|e| ExperimentError::io(&path, e))?;
    Ok(name.to_string())
}

/// Nodal field on a quadrilateral mesh as `x,y,value`.
pub(crate) fn write_field(dir: &Path, name: &str, mesh: &RectMesh, values: &[f64]) -> Result<String, ExperimentError> {
    let path = dir.join(name);
    let mut out = create(&path)?;
    write_field_csv(mesh, values, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| ExperimentError::io(&path, e))?;
    Ok(name.to_string())
}
