//! Field export: node-wise |E| plus a horizontal cut line, as plain CSV.

use std::io::Write;
use std::path::Path;

use crate::device::DeviceGeometry;
use crate::io::fmt_f64;

use super::{FieldSolution, SolverError};

/// Write the node-wise field table (`x_um,y_um,E_Vcm`) and a horizontal cut
/// (`x_um,E_Vcm`) at the requested depth, linearly interpolated between the
/// bracketing grid rows. The cut has one row per x node.
pub fn export_field(
    geom: &DeviceGeometry,
    solution: &FieldSolution,
    cut_y_um: f64,
    grid_path: &Path,
    cut_path: &Path,
) -> Result<(), SolverError> {
    let ys = &geom.ys_um;
    if cut_y_um < ys[0] || cut_y_um > *ys.last().unwrap() {
        return Err(SolverError::CutOutOfDomain { y_um: cut_y_um });
    }
    let ny = geom.ny();

    let mut grid = String::from("x_um,y_um,E_Vcm\n");
    for (ix, &x) in geom.xs_um.iter().enumerate() {
        for (iy, &y) in ys.iter().enumerate() {
            let e = solution.e_v_per_cm[ix * ny + iy];
            grid.push_str(&format!("{},{},{}\n", fmt_f64(x), fmt_f64(y), fmt_f64(e)));
        }
    }
    std::fs::File::create(grid_path)?.write_all(grid.as_bytes())?;

    let iy = ys.partition_point(|&y| y <= cut_y_um).clamp(1, ny - 1) - 1;
    let t = if ys[iy + 1] > ys[iy] {
        (cut_y_um - ys[iy]) / (ys[iy + 1] - ys[iy])
    } else {
        0.0
    };
    let mut cut = String::from("x_um,E_Vcm\n");
    for (ix, &x) in geom.xs_um.iter().enumerate() {
        let e0 = solution.e_v_per_cm[ix * ny + iy];
        let e1 = solution.e_v_per_cm[ix * ny + iy + 1];
        let e = e0 * (1.0 - t) + e1 * t;
        cut.push_str(&format!("{},{}\n", fmt_f64(x), fmt_f64(e)));
    }
    std::fs::File::create(cut_path)?.write_all(cut.as_bytes())?;
    Ok(())
}
