//! Sign activation with the straight-through estimator.

use crate::error::{Error, Result};
use crate::tensor::FloatTensor;

/// Elementwise sign with sign(0) := +1, matching the bit-packing convention.
pub fn sign_forward(x: &FloatTensor) -> FloatTensor {
    x.map(|v| if v >= 0.0 { 1.0 } else { -1.0 })
}

/// Straight-through estimator: the incoming gradient passes wherever the
/// saved pre-activation lies in [-1, 1] (boundary inclusive) and is canceled
/// outside.
pub fn sign_backward_ste(x_saved: &FloatTensor, grad_out: &FloatTensor) -> Result<FloatTensor> {
    if x_saved.shape() != grad_out.shape() {
        return Err(Error::shape(format!(
            "ste shapes differ: {:?} vs {:?}",
            x_saved.shape(),
            grad_out.shape()
        )));
    }
    let data = x_saved
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x.abs() <= 1.0 { g } else { 0.0 })
        .collect();
    Ok(FloatTensor::from_parts(x_saved.shape().to_vec(), data))
}

/// Sign activation layer; caches its input on training-mode forwards.
#[derive(Clone, Debug, Default)]
pub struct Sign {
    cache: Option<FloatTensor>,
}

impl Sign {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward_train(&mut self, x: &FloatTensor) -> FloatTensor {
        self.cache = Some(x.clone());
        sign_forward(x)
    }

    pub fn forward_infer(&self, x: &FloatTensor) -> FloatTensor {
        sign_forward(x)
    }

    pub fn backward(&mut self, grad_out: &FloatTensor) -> Result<FloatTensor> {
        let saved = self
            .cache
            .take()
            .ok_or_else(|| Error::state("sign backward without a training forward"))?;
        sign_backward_ste(&saved, grad_out)
    }
}
