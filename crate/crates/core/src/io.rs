//! Little-endian binary persistence for matrices, lattices and solutions.
//!
//! Every file starts with an 8-byte magic tag. Matrices store `rows, cols`
//! as `u64` followed by the row-major body. Lattices and solutions store the
//! grid header (`dim`, then `lower, upper, points` per axis, then `t_end`,
//! `steps`, `dt`, `seed`) followed by the `(steps + 1) x points` body.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::NoiseLattice;
use crate::grid::{Axis, SpaceGrid, TimeGrid};
use crate::grid_solver::{FieldSolution, SchemeMeta};

const MATRIX_MAGIC: &[u8; 8] = b"HFKMAT01";
const LATTICE_MAGIC: &[u8; 8] = b"HFKLAT01";
const SOLUTION_MAGIC: &[u8; 8] = b"HFKSOL01";

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_usize(r: &mut impl Read, what: &str) -> Result<usize> {
    usize::try_from(get_u64(r)?).map_err(|_| Error::Format(format!("{what} does not fit in memory")))
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 8]) -> Result<()> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    if &b != magic {
        return Err(Error::Format(format!(
            "expected tag {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&b)
        )));
    }
    Ok(())
}

fn put_body(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for &v in values {
        put_f64(w, v)?;
    }
    Ok(())
}

fn get_body(r: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; len.checked_mul(8).ok_or_else(|| Error::Format("body too large".into()))?];
    r.read_exact(&mut bytes)?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after body".into()));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MATRIX_MAGIC)?;
    put_u64(&mut w, m.nrows() as u64)?;
    put_u64(&mut w, m.ncols() as u64)?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            put_f64(&mut w, m[(i, j)])?;
        }
    }
    Ok(w.flush()?)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, MATRIX_MAGIC)?;
    let rows = get_usize(&mut r, "rows")?;
    let cols = get_usize(&mut r, "cols")?;
    let body = get_body(&mut r, rows.checked_mul(cols).ok_or_else(|| Error::Format("matrix too large".into()))?)?;
    Ok(DMatrix::from_row_slice(rows, cols, &body))
}

fn put_grids(w: &mut impl Write, space: &SpaceGrid, time: TimeGrid, seed: u64) -> Result<()> {
    put_u64(w, space.dim() as u64)?;
    for a in space.axes() {
        put_f64(w, a.lower)?;
        put_f64(w, a.upper)?;
        put_u64(w, a.points as u64)?;
    }
    put_f64(w, time.t_end)?;
    put_u64(w, time.steps as u64)?;
    put_f64(w, time.dt())?;
    put_u64(w, seed)
}

fn get_grids(r: &mut impl Read) -> Result<(SpaceGrid, TimeGrid, u64)> {
    let dim = get_usize(r, "dim")?;
    if !(1..=2).contains(&dim) {
        return Err(Error::Format(format!("unsupported dimension {dim}")));
    }
    let mut axes = Vec::with_capacity(dim);
    for _ in 0..dim {
        let lower = get_f64(r)?;
        let upper = get_f64(r)?;
        let points = get_usize(r, "points")?;
        axes.push(Axis { lower, upper, points });
    }
    let space = SpaceGrid::new(axes).map_err(|e| Error::Format(e.to_string()))?;
    let t_end = get_f64(r)?;
    let steps = get_usize(r, "steps")?;
    let dt = get_f64(r)?;
    let time = TimeGrid::new(t_end, steps).map_err(|e| Error::Format(e.to_string()))?;
    if dt.to_bits() != time.dt().to_bits() {
        return Err(Error::Format(format!("stored dt {dt} disagrees with t_end / steps")));
    }
    Ok((space, time, get_u64(r)?))
}

fn body_len(space: &SpaceGrid, time: TimeGrid) -> Result<usize> {
    (time.steps + 1).checked_mul(space.len()).ok_or_else(|| Error::Format("body too large".into()))
}

/// Row `k` of the body holds the increment over `[t_k, t_{k+1}]`.
pub fn write_lattice(path: impl AsRef<Path>, lattice: &NoiseLattice) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(LATTICE_MAGIC)?;
    put_grids(&mut w, &lattice.space_grid, lattice.time_grid, lattice.seed)?;
    put_body(&mut w, &lattice.increments)?;
    Ok(w.flush()?)
}

pub fn read_lattice(path: impl AsRef<Path>) -> Result<NoiseLattice> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, LATTICE_MAGIC)?;
    let (space_grid, time_grid, seed) = get_grids(&mut r)?;
    let len = time_grid.steps.checked_mul(space_grid.len()).ok_or_else(|| Error::Format("body too large".into()))?;
    let increments = get_body(&mut r, len)?;
    Ok(NoiseLattice { time_grid, space_grid, increments, seed })
}

/// Writes the binary solution to `path` and the scheme metadata to
/// `path` with the extension replaced by `json`.
pub fn write_solution(path: impl AsRef<Path>, solution: &FieldSolution) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SOLUTION_MAGIC)?;
    put_grids(&mut w, &solution.space_grid, solution.time_grid, solution.lattice_seed)?;
    put_body(&mut w, &solution.values)?;
    w.flush()?;
    let sidecar = serde_json::to_string_pretty(&solution.scheme).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(sidecar_path(path), sidecar)?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

pub fn read_solution(path: impl AsRef<Path>) -> Result<FieldSolution> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, SOLUTION_MAGIC)?;
    let (space_grid, time_grid, lattice_seed) = get_grids(&mut r)?;
    let values = get_body(&mut r, body_len(&space_grid, time_grid)?)?;
    let scheme: SchemeMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(FieldSolution { time_grid, space_grid, values, scheme, lattice_seed })
}
