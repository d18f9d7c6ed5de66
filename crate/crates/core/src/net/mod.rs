//! A small multilayer perceptron with hand-written reverse-mode derivatives.
//!
//! Parameters live in one flat vector. Layer `l` occupies a contiguous
//! block: its weight matrix `W_l` (`fan_out × fan_in`, row-major) followed
//! by its bias (`fan_out`). Row-major `W_l` is column-major `W_lᵀ`, which is
//! how the forward pass views it.

mod curvature;
mod forward;
pub mod io;
mod train;

use nalgebra::{DMatrix, DVector, DVectorView};

pub use curvature::{ggn_factors, output_hessian, output_hessian_sqrt, per_sample_jacobian, CurvatureFactor};
pub use forward::{forward, loss_and_grad, loss_only, reg_loss_and_grad};
pub use train::{train_task, LrSchedule, Optimizer, Penalty, Regularizer, TrainConfig};

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::rng::{derive_seed, stream, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

/// Loss on the network outputs. Labels are integer class ids either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean softmax cross-entropy.
    CrossEntropy,
    /// Mean of `½‖f(x) − onehot(y)‖²`.
    SquaredError,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arch {
    sizes: Vec<usize>,
    activation: Activation,
    loss: LossKind,
}

/// Placement of one layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlot {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerSlot {
    pub fn len(&self) -> usize {
        (self.fan_in + 1) * self.fan_out
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.weight_offset..self.bias_offset + self.fan_out
    }
}

/// Structured address of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamIndex {
    Weight { layer: usize, row: usize, col: usize },
    Bias { layer: usize, row: usize },
}

impl Arch {
    /// `sizes = [d_in, hidden..., C]`; at least one layer.
    pub fn new(sizes: Vec<usize>, activation: Activation, loss: LossKind) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(contract(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self { sizes, activation, loss })
    }

    pub fn mlp(sizes: &[usize]) -> Result<Self> {
        Self::new(sizes.to_vec(), Activation::Tanh, LossKind::CrossEntropy)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn layers(&self) -> Vec<LayerSlot> {
        let mut offset = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let slot = LayerSlot {
                    fan_in: w[0],
                    fan_out: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset += slot.len();
                slot
            })
            .collect()
    }

    pub fn flat_index(&self, idx: ParamIndex) -> Result<usize> {
        let layers = self.layers();
        match idx {
            ParamIndex::Weight { layer, row, col } => {
                let s = layers.get(layer).ok_or_else(|| contract("layer out of range"))?;
                if row >= s.fan_out || col >= s.fan_in {
                    return Err(contract("weight index out of range"));
                }
                Ok(s.weight_offset + row * s.fan_in + col)
            }
            ParamIndex::Bias { layer, row } => {
                let s = layers.get(layer).ok_or_else(|| contract("layer out of range"))?;
                if row >= s.fan_out {
                    return Err(contract("bias index out of range"));
                }
                Ok(s.bias_offset + row)
            }
        }
    }

    pub fn locate(&self, flat: usize) -> Result<ParamIndex> {
        for (layer, s) in self.layers().into_iter().enumerate() {
            if flat < s.bias_offset && flat >= s.weight_offset {
                let local = flat - s.weight_offset;
                return Ok(ParamIndex::Weight { layer, row: local / s.fan_in, col: local % s.fan_in });
            }
            if flat >= s.bias_offset && flat < s.bias_offset + s.fan_out {
                return Ok(ParamIndex::Bias { layer, row: flat - s.bias_offset });
            }
        }
        Err(contract(format!("flat index {flat} out of range")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    arch: Arch,
    theta: DVector<f64>,
}

impl MlpParams {
    pub fn new(arch: Arch, theta: DVector<f64>) -> Result<Self> {
        if theta.len() != arch.num_params() {
            return Err(contract(format!(
                "parameter vector has length {}, architecture needs {}",
                theta.len(),
                arch.num_params()
            )));
        }
        Ok(Self { arch, theta })
    }

    pub fn zeros(arch: Arch) -> Self {
        let d = arch.num_params();
        Self { arch, theta: DVector::zeros(d) }
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut DVector<f64> {
        &mut self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn with_theta(&self, theta: DVector<f64>) -> Result<Self> {
        Self::new(self.arch.clone(), theta)
    }

    /// `W_lᵀ` as a `fan_in × fan_out` view.
    pub(crate) fn weight_t(&self, slot: &LayerSlot) -> nalgebra::DMatrixView<'_, f64> {
        nalgebra::DMatrixView::from_slice(
            &self.theta.as_slice()[slot.weight_offset..slot.bias_offset],
            slot.fan_in,
            slot.fan_out,
        )
    }

    pub(crate) fn bias(&self, slot: &LayerSlot) -> DVectorView<'_, f64> {
        self.theta.rows(slot.bias_offset, slot.fan_out)
    }

    /// Weight matrix `W_l` as an owned `fan_out × fan_in` matrix.
    pub fn weight(&self, layer: usize) -> DMatrix<f64> {
        let slot = self.arch.layers()[layer];
        self.weight_t(&slot).transpose()
    }
}

/// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
/// Draws run layer by layer in flat order from the `INIT` stream of `seed`.
pub fn init_params(arch: &Arch, seed: u64) -> MlpParams {
    let mut rng = SplitMix64::new(derive_seed(seed, stream::INIT));
    let mut theta = DVector::zeros(arch.num_params());
    for slot in arch.layers() {
        let bound = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
        for i in slot.weight_offset..slot.bias_offset {
            theta[i] = rng.uniform(-bound, bound);
        }
    }
    MlpParams { arch: arch.clone(), theta }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mnist_parameter_count() {
        let arch = Arch::mlp(&[784, 400, 400, 10]).unwrap();
        assert_eq!(arch.num_params(), 478_410);
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let arch = Arch::mlp(&[5, 4, 3]).unwrap();
        let a = init_params(&arch, 11);
        assert_eq!(a, init_params(&arch, 11));
        assert_ne!(a, init_params(&arch, 12));
        for slot in arch.layers() {
            let bound = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
            assert!(a.theta().rows(slot.bias_offset, slot.fan_out).iter().all(|&b| b == 0.0));
            assert!(a.theta().as_slice()[slot.weight_offset..slot.bias_offset].iter().all(|w| w.abs() <= bound));
        }
    }

    #[test]
    fn layout_round_trip() {
        let arch = Arch::mlp(&[3, 4, 2]).unwrap();
        for flat in 0..arch.num_params() {
            let idx = arch.locate(flat).unwrap();
            assert_eq!(arch.flat_index(idx).unwrap(), flat);
        }
        assert!(arch.locate(arch.num_params()).is_err());
        assert_eq!(arch.flat_index(ParamIndex::Weight { layer: 0, row: 1, col: 2 }).unwrap(), 5);
        assert_eq!(arch.flat_index(ParamIndex::Bias { layer: 0, row: 0 }).unwrap(), 12);
    }

    #[test]
    fn weight_view_orientation() {
        let arch = Arch::mlp(&[2, 3]).unwrap();
        let mut p = MlpParams::zeros(arch.clone());
        let idx = arch.flat_index(ParamIndex::Weight { layer: 0, row: 2, col: 1 }).unwrap();
        p.theta_mut()[idx] = 7.0;
        assert_eq!(p.weight(0)[(2, 1)], 7.0);
    }

    #[test]
    fn rejects_bad_arch() {
        assert!(Arch::mlp(&[3]).is_err());
        assert!(Arch::mlp(&[3, 0, 2]).is_err());
    }
}
