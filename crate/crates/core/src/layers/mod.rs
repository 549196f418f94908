//! Layer zoo. Every layer caches what its backward needs during a
//! training-mode forward; inference forwards never touch layer state.

mod conv2d;
mod linear;
pub mod loss;
mod norm;
mod pool;
mod sign;

pub use conv2d::BinaryConv2d;
pub use linear::{BinaryDense, Dense};
pub use loss::softmax_cross_entropy;
pub use norm::{ap2, ap2_parts, fold_bn_to_shift, BatchNorm, ShiftNorm, BN_EPS, BN_MOMENTUM};
pub use pool::{Flatten, MaxPool2d};
pub use sign::{sign_backward_ste, sign_forward, Sign};

use crate::error::{Error, Result};
use crate::tensor::FloatTensor;

/// One trainable tensor paired with its gradient. Binary layers mark their
/// latent weights with `clip_unit` so the optimizer clamps them to [-1, 1]
/// after each step.
pub struct ParamSlot<'a> {
    pub value: &'a mut FloatTensor,
    pub grad: &'a mut FloatTensor,
    pub clip_unit: bool,
}

#[derive(Clone, Debug)]
pub enum Layer {
    BinaryDense(BinaryDense),
    BinaryConv2d(BinaryConv2d),
    Dense(Dense),
    BatchNorm(BatchNorm),
    Sign(Sign),
    MaxPool2d(MaxPool2d),
    Flatten(Flatten),
    ShiftNorm(ShiftNorm),
}

impl Layer {
    pub fn forward_train(&mut self, x: &FloatTensor) -> Result<FloatTensor> {
        match self {
            Layer::BinaryDense(l) => l.forward_train(x),
            Layer::BinaryConv2d(l) => l.forward_train(x),
            Layer::Dense(l) => l.forward_train(x),
            Layer::BatchNorm(l) => l.forward_train(x),
            Layer::Sign(l) => Ok(l.forward_train(x)),
            Layer::MaxPool2d(l) => l.forward_train(x),
            Layer::Flatten(l) => l.forward_train(x),
            Layer::ShiftNorm(_) => Err(Error::state(
                "shift norm is inference-only and cannot train",
            )),
        }
    }

    pub fn forward_infer(&self, x: &FloatTensor) -> Result<FloatTensor> {
        match self {
            Layer::BinaryDense(l) => l.forward_infer(x),
            Layer::BinaryConv2d(l) => l.forward_infer(x),
            Layer::Dense(l) => l.forward_infer(x),
            Layer::BatchNorm(l) => l.forward_infer(x),
            Layer::Sign(l) => Ok(l.forward_infer(x)),
            Layer::MaxPool2d(l) => l.forward_infer(x),
            Layer::Flatten(l) => l.forward_infer(x),
            Layer::ShiftNorm(l) => l.forward_infer(x),
        }
    }

    pub fn backward(&mut self, grad_out: &FloatTensor) -> Result<FloatTensor> {
        match self {
            Layer::BinaryDense(l) => l.backward(grad_out),
            Layer::BinaryConv2d(l) => l.backward(grad_out),
            Layer::Dense(l) => l.backward(grad_out),
            Layer::BatchNorm(l) => l.backward(grad_out),
            Layer::Sign(l) => l.backward(grad_out),
            Layer::MaxPool2d(l) => l.backward(grad_out),
            Layer::Flatten(l) => l.backward(grad_out),
            Layer::ShiftNorm(_) => Err(Error::state(
                "shift norm is inference-only and has no backward",
            )),
        }
    }

    pub fn params(&mut self) -> Vec<ParamSlot<'_>> {
        match self {
            Layer::BinaryDense(l) => l.param_slots(),
            Layer::BinaryConv2d(l) => l.param_slots(),
            Layer::Dense(l) => l.param_slots(),
            Layer::BatchNorm(l) => l.param_slots(),
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::BinaryDense(l) => l.weight().numel(),
            Layer::BinaryConv2d(l) => l.weight().numel(),
            Layer::Dense(l) => l.weight().numel() + l.bias().numel(),
            Layer::BatchNorm(l) => 2 * l.channels(),
            _ => 0,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::BinaryDense(_) => "BinaryDense",
            Layer::BinaryConv2d(_) => "BinaryConv2d",
            Layer::Dense(_) => "Dense",
            Layer::BatchNorm(_) => "BatchNorm",
            Layer::Sign(_) => "Sign",
            Layer::MaxPool2d(_) => "MaxPool2d",
            Layer::Flatten(_) => "Flatten",
            Layer::ShiftNorm(_) => "ShiftNorm",
        }
    }

    /// One-line human description for model listings.
    pub fn describe(&self) -> String {
        match self {
            Layer::BinaryDense(l) => format!("BinaryDense {}->{}", l.in_dim(), l.out_dim()),
            Layer::BinaryConv2d(l) => {
                let g = l.geometry();
                format!(
                    "BinaryConv2d {}->{} {}x{} stride {} pad {}",
                    g.in_channels, g.out_channels, g.kernel_h, g.kernel_w, g.stride, g.padding
                )
            }
            Layer::Dense(l) => format!("Dense {}->{}", l.in_dim(), l.out_dim()),
            Layer::BatchNorm(l) => format!("BatchNorm {} channels", l.channels()),
            Layer::Sign(_) => "Sign".to_string(),
            Layer::MaxPool2d(l) => format!("MaxPool2d {} stride {}", l.window(), l.stride()),
            Layer::Flatten(_) => "Flatten".to_string(),
            Layer::ShiftNorm(l) => format!("ShiftNorm {} channels", l.channels()),
        }
    }
}
