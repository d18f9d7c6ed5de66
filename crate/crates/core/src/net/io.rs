//! `MLPW` checkpoints: magic `b"MLPW"`, version `u32`, activation tag `u32`
//! (0 = tanh), loss tag `u32` (0 = cross-entropy, 1 = squared error), number
//! of layer sizes `u64`, the sizes as `u64`, `D` as `u64`, then `θ` as `f64`.
//! Everything little-endian.

use std::io::{Read, Write};

use nalgebra::DVector;

use super::{Activation, Arch, LossKind, MlpParams};
use crate::dplr::io::{read_f64s, read_header, read_len, write_f64s};
use crate::error::{Error, Result};

pub const MLPW_MAGIC: &[u8; 4] = b"MLPW";

pub fn write_params<W: Write>(out: &mut W, p: &MlpParams) -> Result<()> {
    let arch = p.arch();
    out.write_all(MLPW_MAGIC)?;
    out.write_all(&crate::dplr::io::FORMAT_VERSION.to_le_bytes())?;
    let act: u32 = match arch.activation() {
        Activation::Tanh => 0,
    };
    let loss: u32 = match arch.loss() {
        LossKind::CrossEntropy => 0,
        LossKind::SquaredError => 1,
    };
    out.write_all(&act.to_le_bytes())?;
    out.write_all(&loss.to_le_bytes())?;
    out.write_all(&(arch.sizes().len() as u64).to_le_bytes())?;
    for &s in arch.sizes() {
        out.write_all(&(s as u64).to_le_bytes())?;
    }
    out.write_all(&(p.dim() as u64).to_le_bytes())?;
    write_f64s(out, p.theta().iter().copied())
}

pub fn read_params<R: Read>(input: &mut R) -> Result<MlpParams> {
    read_header(input, MLPW_MAGIC)?;
    let mut tag = [0u8; 4];
    input.read_exact(&mut tag)?;
    let activation = match u32::from_le_bytes(tag) {
        0 => Activation::Tanh,
        other => return Err(Error::Parse(format!("unknown activation tag {other}"))),
    };
    input.read_exact(&mut tag)?;
    let loss = match u32::from_le_bytes(tag) {
        0 => LossKind::CrossEntropy,
        1 => LossKind::SquaredError,
        other => return Err(Error::Parse(format!("unknown loss tag {other}"))),
    };
    let n = read_len(input)?;
    let sizes = (0..n).map(|_| read_len(input)).collect::<Result<Vec<_>>>()?;
    let arch = Arch::new(sizes, activation, loss).map_err(|e| Error::Parse(e.to_string()))?;
    let d = read_len(input)?;
    let theta = DVector::from_vec(read_f64s(input, d)?);
    MlpParams::new(arch, theta).map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_params;

    #[test]
    fn checkpoint_round_trip() {
        let p = init_params(&Arch::mlp(&[4, 3, 2]).unwrap(), 8);
        let mut buf = Vec::new();
        write_params(&mut buf, &p).unwrap();
        assert_eq!(&buf[..4], b"MLPW");
        assert_eq!(read_params(&mut buf.as_slice()).unwrap(), p);
    }
}
