//! "GF01" grid-field file format.
//!
//! Little-endian binary: magic bytes `GF01`, u32 ndim, u32 cells_per_axis,
//! f64 spacing, then node values in row-major order as f64 with masked-out
//! nodes stored as IEEE-754 NaN.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{build_ball_grid, CellSet, GridFunction};

const MAGIC: &[u8; 4] = b"GF01";

pub fn write_gf01(path: &Path, u: &GridFunction) -> Result<()> {
    let spec = u.spec();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(spec.ndim() as u32).to_le_bytes())?;
    w.write_all(&(spec.cells() as u32).to_le_bytes())?;
    w.write_all(&spec.spacing().to_le_bytes())?;
    for i in 0..spec.total_nodes() {
        let v = if spec.is_masked(i) {
            u.value(i)
        } else {
            f64::NAN
        };
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a cell set as a 0/1-valued field.
pub fn write_mask_gf01(path: &Path, s: &CellSet) -> Result<()> {
    let mut u = GridFunction::zeros(s.spec());
    for i in s.nodes() {
        u.values_mut()[i] = 1.0;
    }
    write_gf01(path, &u)
}

pub fn read_gf01(path: &Path) -> Result<GridFunction> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected GF01",
            magic
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let ndim = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let cells = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let spacing = f64::from_le_bytes(b8);

    let spec = build_ball_grid(ndim, cells)
        .map_err(|e| Error::Format(format!("unsupported grid in file: {e}")))?;
    if (spacing - spec.spacing()).abs() > 1e-12 {
        return Err(Error::Format(format!(
            "spacing {} inconsistent with {} cells per axis",
            spacing, cells
        )));
    }
    let total = spec.total_nodes();
    let mut values = vec![0.0f64; total];
    for v in values.iter_mut() {
        r.read_exact(&mut b8)?;
        *v = f64::from_le_bytes(b8);
    }
    for i in 0..total {
        if spec.is_masked(i) && !values[i].is_finite() {
            return Err(Error::Format(format!(
                "non-finite value at masked node {i}"
            )));
        }
    }
    GridFunction::from_values(&spec, values)
}
