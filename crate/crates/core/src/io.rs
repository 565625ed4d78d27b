//! Little-endian binary containers for fields, trajectories and particle paths.
//!
//! Every container starts with a 4-byte magic and a `u32` format version.
//!
//! | container  | magic  | header after version                                                         |
//! |------------|--------|------------------------------------------------------------------------------|
//! | field      | `FDRF` | `u32 d, u32 n, f64 L, u8 dtype, u8 layout, 6 pad`                           |
//! | trajectory | `FDRT` | field header, then `u64 frames`, then `frames` x `f64` times                 |
//! | paths      | `FDRP` | `u64 N, u64 steps, u32 d, u8 dtype, 3 pad`, then `steps + 1` x `f64` times   |
//!
//! `dtype = 1` means `f64`; `layout = 0` means row-major with axis 0 slowest.
//! Field payloads hold `n^d` values; trajectories hold the frames in time
//! order; path payloads are particle-major, each particle storing `steps + 1`
//! positions of `d` coordinates.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

pub const VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;
const LAYOUT_ROW_MAJOR: u8 = 0;

fn fmt_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

struct Reader<'a, R: Read> {
    inner: &'a mut R,
}

impl<R: Read> Reader<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated container: {e}")))?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        (0..count).map(|_| self.f64()).collect()
    }
    fn expect_end(&mut self) -> Result<()> {
        let mut extra = [0u8; 1];
        match self.inner.read(&mut extra) {
            Ok(0) => Ok(()),
            Ok(_) => fmt_err("trailing bytes after container payload"),
            Err(e) => Err(e.into()),
        }
    }
}

fn check_magic<R: Read>(r: &mut Reader<R>, magic: &[u8; 4]) -> Result<()> {
    let got = r.bytes::<4>()?;
    if &got != magic {
        return fmt_err(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        ));
    }
    let version = r.u32()?;
    if version != VERSION {
        return fmt_err(format!("unsupported container version {version}"));
    }
    Ok(())
}

fn write_grid_header<W: Write>(w: &mut W, magic: &[u8; 4], grid: &GridSpec) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(grid.dim() as u32).to_le_bytes())?;
    w.write_all(&(grid.n() as u32).to_le_bytes())?;
    w.write_all(&grid.length().to_le_bytes())?;
    w.write_all(&[DTYPE_F64, LAYOUT_ROW_MAJOR, 0, 0, 0, 0, 0, 0])?;
    Ok(())
}

fn read_grid_header<R: Read>(r: &mut Reader<R>, magic: &[u8; 4]) -> Result<GridSpec> {
    check_magic(r, magic)?;
    let dim = r.u32()? as usize;
    let n = r.u32()? as usize;
    let length = r.f64()?;
    let tail = r.bytes::<8>()?;
    if tail[0] != DTYPE_F64 || tail[1] != LAYOUT_ROW_MAJOR {
        return fmt_err(format!("unsupported dtype/layout {}/{}", tail[0], tail[1]));
    }
    GridSpec::new(dim, n, length).map_err(|e| Error::Format(format!("invalid grid header: {e}")))
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_field<W: Write>(w: &mut W, f: &Field) -> Result<()> {
    write_grid_header(w, b"FDRF", f.grid())?;
    write_f64s(w, f.values())
}

pub fn read_field<R: Read>(r: &mut R) -> Result<Field> {
    let mut r = Reader { inner: r };
    let grid = read_grid_header(&mut r, b"FDRF")?;
    let values = r.f64s(grid.len())?;
    r.expect_end()?;
    Field::new(grid, values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_trajectory<W: Write>(w: &mut W, grid: &GridSpec, times: &[f64], frames: &[Field]) -> Result<()> {
    if times.len() != frames.len() {
        return fmt_err("trajectory needs one time per frame");
    }
    write_grid_header(w, b"FDRT", grid)?;
    w.write_all(&(times.len() as u64).to_le_bytes())?;
    write_f64s(w, times)?;
    for f in frames {
        grid.check_same(f.grid())?;
        write_f64s(w, f.values())?;
    }
    Ok(())
}

/// Returns `(times, frames)`.
pub fn read_trajectory<R: Read>(r: &mut R) -> Result<(Vec<f64>, Vec<Field>)> {
    let mut r = Reader { inner: r };
    let grid = read_grid_header(&mut r, b"FDRT")?;
    let count = r.u64()? as usize;
    let times = r.f64s(count)?;
    let frames = (0..count)
        .map(|_| Field::new(grid, r.f64s(grid.len())?).map_err(|e| Error::Format(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    r.expect_end()?;
    Ok((times, frames))
}

/// Particle paths: `positions[i]` holds `times.len() * dim` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PathData {
    pub dim: usize,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
}

pub fn write_paths<W: Write>(w: &mut W, paths: &PathData) -> Result<()> {
    let per = paths.times.len() * paths.dim;
    if paths.times.is_empty() || paths.positions.iter().any(|p| p.len() != per) {
        return fmt_err("every path needs one position per time");
    }
    w.write_all(b"FDRP")?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(paths.positions.len() as u64).to_le_bytes())?;
    w.write_all(&((paths.times.len() - 1) as u64).to_le_bytes())?;
    w.write_all(&(paths.dim as u32).to_le_bytes())?;
    w.write_all(&[DTYPE_F64, 0, 0, 0])?;
    write_f64s(w, &paths.times)?;
    for p in &paths.positions {
        write_f64s(w, p)?;
    }
    Ok(())
}

pub fn read_paths<R: Read>(r: &mut R) -> Result<PathData> {
    let mut r = Reader { inner: r };
    check_magic(&mut r, b"FDRP")?;
    let count = r.u64()? as usize;
    let steps = r.u64()? as usize;
    let dim = r.u32()? as usize;
    let tail = r.bytes::<4>()?;
    if tail[0] != DTYPE_F64 || !(1..=2).contains(&dim) {
        return fmt_err(format!("unsupported dtype {} or dimension {dim}", tail[0]));
    }
    let times = r.f64s(steps + 1)?;
    let positions = (0..count).map(|_| r.f64s((steps + 1) * dim)).collect::<Result<Vec<_>>>()?;
    r.expect_end()?;
    Ok(PathData { dim, times, positions })
}
