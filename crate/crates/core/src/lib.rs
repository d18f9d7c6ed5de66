//! Low-rank Laplace–Gaussian filtering and smoothing over neural-network
//! weights for sequential task learning.

pub mod dplr;
pub mod error;
pub mod lgf;
pub mod net;
pub mod oracle;
pub mod rng;
pub mod rts;
pub mod tasks;
pub mod trace;

pub use error::{Error, Result};
