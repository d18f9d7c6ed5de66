//! Little-endian binary containers.
//!
//! `DPLR`: magic `b"DPLR"`, version `u32`, `D` as `u64`, `k` as `u64`, then
//! the diagonal (`D` values), the factor column-major (`D·k` values) and the
//! core row-major (`k·k` values), all `f64`.
//!
//! `VECF`: magic `b"VECF"`, version `u32`, length `u64`, then the values.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use super::DplrSym;
use crate::error::{Error, Result};

pub const DPLR_MAGIC: &[u8; 4] = b"DPLR";
pub const VEC_MAGIC: &[u8; 4] = b"VECF";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_dplr<W: Write>(out: &mut W, a: &DplrSym) -> Result<()> {
    out.write_all(DPLR_MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(a.dim() as u64).to_le_bytes())?;
    out.write_all(&(a.rank() as u64).to_le_bytes())?;
    write_f64s(out, a.diag().iter().copied())?;
    write_f64s(out, a.factor().iter().copied())?;
    let core = a.core();
    write_f64s(out, (0..core.nrows()).flat_map(|i| (0..core.ncols()).map(move |j| core[(i, j)])))?;
    Ok(())
}

pub fn read_dplr<R: Read>(input: &mut R) -> Result<DplrSym> {
    read_header(input, DPLR_MAGIC)?;
    let d = read_len(input)?;
    let k = read_len(input)?;
    let diag = DVector::from_vec(read_f64s(input, d)?);
    let factor = DMatrix::from_vec(d, k, read_f64s(input, d * k)?);
    let core = DMatrix::from_row_slice(k, k, &read_f64s(input, k * k)?);
    DplrSym::new(diag, factor, core).map_err(|e| Error::Parse(format!("DPLR payload: {e}")))
}

pub fn write_vector<W: Write>(out: &mut W, v: &DVector<f64>) -> Result<()> {
    out.write_all(VEC_MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(v.len() as u64).to_le_bytes())?;
    write_f64s(out, v.iter().copied())
}

pub fn read_vector<R: Read>(input: &mut R) -> Result<DVector<f64>> {
    read_header(input, VEC_MAGIC)?;
    let n = read_len(input)?;
    Ok(DVector::from_vec(read_f64s(input, n)?))
}

pub(crate) fn write_f64s<W: Write>(out: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * 1024);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
        if buf.len() >= 8 * 1024 {
            out.write_all(&buf)?;
            buf.clear();
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    input.read_exact(&mut bytes).map_err(|e| truncated(e, "f64 payload"))?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub(crate) fn read_header<R: Read>(input: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut got = [0u8; 4];
    input.read_exact(&mut got).map_err(|e| truncated(e, "magic"))?;
    if &got != magic {
        return Err(Error::Parse(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let mut version = [0u8; 4];
    input.read_exact(&mut version).map_err(|e| truncated(e, "version"))?;
    let version = u32::from_le_bytes(version);
    if version != FORMAT_VERSION {
        return Err(Error::Parse(format!("unsupported container version {version}")));
    }
    Ok(())
}

pub(crate) fn read_len<R: Read>(input: &mut R) -> Result<usize> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b).map_err(|e| truncated(e, "length"))?;
    usize::try_from(u64::from_le_bytes(b)).map_err(|_| Error::Parse("length overflows usize".into()))
}

fn truncated(e: std::io::Error, what: &str) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Parse(format!("truncated container while reading {what}"))
    } else {
        Error::Io(e)
    }
}
