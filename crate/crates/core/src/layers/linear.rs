//! Dense layers: binary (XNOR path) and floating point.

use crate::bits::{binary_gemm, pack_signs, unpack};
use crate::error::{Error, Result};
use crate::tensor::{float_gemm, FloatTensor};
use rand::Rng;

/// Dense layer with ±1 effective weights.
///
/// The latent weights are real-valued master copies in [-1, 1], binarized by
/// sign on every forward pass (the optimizer updates the latents; clipping
/// happens in the optimizer step). Weights are stored out×in, exactly the
/// pre-transposed right operand `binary_gemm` wants, so binarization is a
/// single `pack_signs` with no transposition.
///
/// A ±1-valued input batch takes the XNOR-popcount path; anything else (the
/// first-layer case, where inputs are real images) multiplies the binarized
/// weights in the float domain. Both paths agree bit-for-bit on ±1 inputs.
#[derive(Clone, Debug)]
pub struct BinaryDense {
    weight: FloatTensor, // out×in latent
    grad_weight: FloatTensor,
    cache: Option<DenseCache>,
}

#[derive(Clone, Debug)]
struct DenseCache {
    x: FloatTensor,          // input as seen by the multiply
    weight_bin: FloatTensor, // sign(latent), out×in
}

impl BinaryDense {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let weight = FloatTensor::from_fn(vec![out_dim, in_dim], |_| rng.gen_range(-1.0..1.0));
        Self {
            grad_weight: FloatTensor::zeros(vec![out_dim, in_dim]),
            weight,
            cache: None,
        }
    }

    pub fn from_weight(weight: FloatTensor) -> Result<Self> {
        let [out_dim, in_dim] = weight.dims2()?;
        Ok(Self {
            grad_weight: FloatTensor::zeros(vec![out_dim, in_dim]),
            weight,
            cache: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.dim(1)
    }

    pub fn out_dim(&self) -> usize {
        self.weight.dim(0)
    }

    pub fn weight(&self) -> &FloatTensor {
        &self.weight
    }

    fn forward(&self, x: &FloatTensor) -> Result<(FloatTensor, FloatTensor)> {
        let [_, in_dim] = x.dims2()?;
        if in_dim != self.in_dim() {
            return Err(Error::shape(format!(
                "binary dense expects {} inputs, got {in_dim}",
                self.in_dim()
            )));
        }
        let w_bits = pack_signs(&self.weight)?;
        let w_bin = unpack(&w_bits);
        let y = if x.is_pm_one() {
            binary_gemm(&pack_signs(x)?, &w_bits)?
        } else {
            float_gemm(x, &w_bin.transpose2d()?)?
        };
        Ok((y, w_bin))
    }

    pub fn forward_train(&mut self, x: &FloatTensor) -> Result<FloatTensor> {
        let (y, weight_bin) = self.forward(x)?;
        self.cache = Some(DenseCache { x: x.clone(), weight_bin });
        Ok(y)
    }

    pub fn forward_infer(&self, x: &FloatTensor) -> Result<FloatTensor> {
        Ok(self.forward(x)?.0)
    }

    /// Returns the input gradient; the latent-weight gradient is stored for
    /// the optimizer. The gradient w.r.t. the binarized weight is applied to
    /// the latent weight directly (clipping happens in the optimizer step).
    pub fn backward(&mut self, grad_out: &FloatTensor) -> Result<FloatTensor> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::state("binary dense backward without a training forward"))?;
        let grad_in = float_gemm(grad_out, &cache.weight_bin)?;
        self.grad_weight = float_gemm(&grad_out.transpose2d()?, &cache.x)?;
        Ok(grad_in)
    }

    pub(crate) fn param_slots(&mut self) -> Vec<super::ParamSlot<'_>> {
        vec![super::ParamSlot {
            value: &mut self.weight,
            grad: &mut self.grad_weight,
            clip_unit: true,
        }]
    }
}

/// Ordinary floating-point dense layer (the float head of the transfer
/// workflow and the logits layer of mixed models). y = x·Wᵀ + b.
#[derive(Clone, Debug)]
pub struct Dense {
    weight: FloatTensor, // out×in
    bias: FloatTensor,   // out
    grad_weight: FloatTensor,
    grad_bias: FloatTensor,
    cache: Option<FloatTensor>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        // Glorot-uniform init
        let bound = (6.0 / (in_dim + out_dim) as f32).sqrt();
        let weight = FloatTensor::from_fn(vec![out_dim, in_dim], |_| rng.gen_range(-bound..bound));
        Self {
            weight,
            bias: FloatTensor::zeros(vec![out_dim]),
            grad_weight: FloatTensor::zeros(vec![out_dim, in_dim]),
            grad_bias: FloatTensor::zeros(vec![out_dim]),
            cache: None,
        }
    }

    pub fn from_params(weight: FloatTensor, bias: FloatTensor) -> Result<Self> {
        let [out_dim, in_dim] = weight.dims2()?;
        if bias.shape() != [out_dim] {
            return Err(Error::shape(format!(
                "dense bias shape {:?} does not match {out_dim} outputs",
                bias.shape()
            )));
        }
        Ok(Self {
            weight,
            bias,
            grad_weight: FloatTensor::zeros(vec![out_dim, in_dim]),
            grad_bias: FloatTensor::zeros(vec![out_dim]),
            cache: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.dim(1)
    }

    pub fn out_dim(&self) -> usize {
        self.weight.dim(0)
    }

    pub fn weight(&self) -> &FloatTensor {
        &self.weight
    }

    pub fn bias(&self) -> &FloatTensor {
        &self.bias
    }

    fn forward(&self, x: &FloatTensor) -> Result<FloatTensor> {
        let [batch, in_dim] = x.dims2()?;
        if in_dim != self.in_dim() {
            return Err(Error::shape(format!(
                "dense expects {} inputs, got {in_dim}",
                self.in_dim()
            )));
        }
        let mut y = float_gemm(x, &self.weight.transpose2d()?)?;
        let out_dim = self.out_dim();
        let b = self.bias.data();
        let yd = y.data_mut();
        for r in 0..batch {
            for c in 0..out_dim {
                yd[r * out_dim + c] += b[c];
            }
        }
        Ok(y)
    }

    pub fn forward_train(&mut self, x: &FloatTensor) -> Result<FloatTensor> {
        let y = self.forward(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn forward_infer(&self, x: &FloatTensor) -> Result<FloatTensor> {
        self.forward(x)
    }

    pub fn backward(&mut self, grad_out: &FloatTensor) -> Result<FloatTensor> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::state("dense backward without a training forward"))?;
        let grad_in = float_gemm(grad_out, &self.weight)?;
        self.grad_weight = float_gemm(&grad_out.transpose2d()?, &x)?;
        let [batch, out_dim] = grad_out.dims2()?;
        let mut gb = vec![0.0f32; out_dim];
        for r in 0..batch {
            for c in 0..out_dim {
                gb[c] += grad_out.data()[r * out_dim + c];
            }
        }
        self.grad_bias = FloatTensor::from_parts(vec![out_dim], gb);
        Ok(grad_in)
    }

    pub(crate) fn param_slots(&mut self) -> Vec<super::ParamSlot<'_>> {
        vec![
            super::ParamSlot {
                value: &mut self.weight,
                grad: &mut self.grad_weight,
                clip_unit: false,
            },
            super::ParamSlot {
                value: &mut self.bias,
                grad: &mut self.grad_bias,
                clip_unit: false,
            },
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binary_dense_matches_tensor_example() {
        // latent weights whose signs form the transpose of
        // B = [[+1,-1],[+1,+1],[-1,-1]] from the kernel example
        let w = FloatTensor::new(vec![2, 3], vec![0.9, 0.2, -0.7, -0.3, 0.8, -0.1]).unwrap();
        let mut layer = BinaryDense::from_weight(w).unwrap();
        let x = FloatTensor::new(vec![2, 3], vec![1.0, -1.0, 1.0, -1.0, -1.0, 1.0]).unwrap();
        let y = layer.forward_train(&x).unwrap();
        assert_eq!(y.data(), &[-1.0, -3.0, -3.0, -1.0]);
    }

    #[test]
    fn binary_dense_all_positive_latents() {
        let w = FloatTensor::filled(vec![1, 5], 0.2);
        let layer = BinaryDense::from_weight(w).unwrap();
        let x = FloatTensor::filled(vec![1, 5], 1.0);
        let y = layer.forward_infer(&x).unwrap();
        assert_eq!(y.data(), &[5.0]);
    }

    #[test]
    fn binary_and_float_paths_agree_on_pm_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let in_dim = rng.gen_range(1..80);
            let out_dim = rng.gen_range(1..20);
            let batch = rng.gen_range(1..8);
            let layer = BinaryDense::new(in_dim, out_dim, &mut rng);
            let x = FloatTensor::from_fn(vec![batch, in_dim], |_| {
                if rng.gen::<bool>() { 1.0 } else { -1.0 }
            });
            let fast = layer.forward_infer(&x).unwrap();
            // float reference path on the same binarized weights
            let w_bin = unpack(&pack_signs(layer.weight()).unwrap());
            let slow = float_gemm(&x, &w_bin.transpose2d().unwrap()).unwrap();
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn binary_dense_zero_grad_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut layer = BinaryDense::new(4, 3, &mut rng);
        let x = FloatTensor::from_fn(vec![2, 4], |_| if rng.gen::<bool>() { 1.0 } else { -1.0 });
        layer.forward_train(&x).unwrap();
        let grad_in = layer.backward(&FloatTensor::zeros(vec![2, 3])).unwrap();
        assert!(grad_in.data().iter().all(|&v| v == 0.0));
        assert!(layer.grad_weight.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn binary_dense_grad_in_is_weight_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut layer = BinaryDense::new(3, 2, &mut rng);
        let w_bin = unpack(&pack_signs(layer.weight()).unwrap());
        let x = FloatTensor::new(vec![1, 3], vec![1.0, -1.0, 1.0]).unwrap();
        layer.forward_train(&x).unwrap();
        let g = FloatTensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        let grad_in = layer.backward(&g).unwrap();
        // picking output 0 exposes row 0 of the binarized weights
        assert_eq!(grad_in.data(), w_bin.row(0));
    }

    #[test]
    fn binary_dense_backward_requires_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut layer = BinaryDense::new(2, 2, &mut rng);
        assert!(matches!(
            layer.backward(&FloatTensor::zeros(vec![1, 2])),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn dense_forward_with_bias() {
        let w = FloatTensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = FloatTensor::new(vec![2], vec![0.5, -0.5]).unwrap();
        let layer = Dense::from_params(w, b).unwrap();
        let x = FloatTensor::new(vec![1, 2], vec![2.0, 3.0]).unwrap();
        assert_eq!(layer.forward_infer(&x).unwrap().data(), &[2.5, 2.5]);
    }

    #[test]
    fn dense_input_dim_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let layer = Dense::new(3, 2, &mut rng);
        let x = FloatTensor::zeros(vec![1, 4]);
        assert!(matches!(layer.forward_infer(&x), Err(Error::Shape(_))));
    }
}
