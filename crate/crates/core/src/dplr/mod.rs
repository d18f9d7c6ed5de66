//! Diagonal-plus-low-rank matrix algebra.
//!
//! Every precision matrix in the filter is a [`DplrSym`]; the smoothing gain
//! is a [`DplrGain`]. All operations are `O(D·k²)` or cheaper in the ambient
//! dimension `D`. The only D×D buffers come from `to_dense`, which refuses
//! dimensions above [`DENSE_BOUND`].

mod compress;
mod gain;
pub mod io;
mod noise;
mod small;
mod sym;

use nalgebra::DMatrix;

pub use compress::{compress, compress_symmetric, discarded_diagonal, Compressed, RANK_TOL};
pub use gain::DplrGain;
pub use noise::ProcessNoise;
pub use small::sqrt_core;
pub use sym::DplrSym;

pub(crate) use small::core_resolvent;
pub(crate) use sym::scale_rows;

use crate::error::{contract, Result};

/// Largest dimension for which a dense realization may be formed.
pub const DENSE_BOUND: usize = 256;

pub(crate) fn check_dense_bound(dim: usize) -> Result<()> {
    if dim > DENSE_BOUND {
        return Err(contract(format!("dense realization of D = {dim} exceeds bound {DENSE_BOUND}")));
    }
    Ok(())
}

/// `Aᵀ·B` through a transposed copy so the product runs through the blocked GEMM.
pub(crate) fn at_b(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * b
}
