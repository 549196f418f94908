//! A model is an ordered layer stack; forward threads activations through
//! it, backward threads gradients back in reverse.

use crate::error::{Error, Result};
use crate::layers::{fold_bn_to_shift, Layer, ParamSlot};
use crate::tensor::FloatTensor;

#[derive(Clone, Debug, Default)]
pub struct Model {
    layers: Vec<Layer>,
}

impl Model {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn push(&mut self, layer: Layer) {
        self.layers.push(layer);
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    pub fn forward_train(&mut self, x: &FloatTensor) -> Result<FloatTensor> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward_train(&cur)?;
        }
        Ok(cur)
    }

    pub fn forward_infer(&self, x: &FloatTensor) -> Result<FloatTensor> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward_infer(&cur)?;
        }
        Ok(cur)
    }

    /// Propagates the loss gradient through every layer; returns the
    /// gradient with respect to the model input.
    pub fn backward(&mut self, grad_out: &FloatTensor) -> Result<FloatTensor> {
        let mut cur = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    pub fn params(&mut self) -> Vec<ParamSlot<'_>> {
        self.layers.iter_mut().flat_map(Layer::params).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Clamps every unit-clipped (binary latent) parameter into [-1, 1].
    pub fn clip_binary_latents(&mut self) {
        for slot in self.params() {
            if slot.clip_unit {
                for v in slot.value.data_mut() {
                    *v = v.clamp(-1.0, 1.0);
                }
            }
        }
    }

    /// Output width of the last layer that has one; None for stacks ending
    /// in shape-preserving layers.
    pub fn output_classes(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l {
            Layer::Dense(d) => Some(d.out_dim()),
            Layer::BinaryDense(d) => Some(d.out_dim()),
            Layer::BinaryConv2d(c) => Some(c.geometry().out_channels),
            _ => None,
        })
    }

    /// Inference-only copy with every batch norm folded to a shift norm.
    pub fn fold_shift_norms(&self) -> Result<Model> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::BatchNorm(bn) => Ok(Layer::ShiftNorm(fold_bn_to_shift(bn)?)),
                other => Ok(other.clone()),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Model::new(layers))
    }

    pub fn describe(&self) -> String {
        let mut out = String::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let params = layer.param_count();
            if params > 0 {
                out.push_str(&format!("{i:3}  {:<40} {params} params\n", layer.describe()));
            } else {
                out.push_str(&format!("{i:3}  {}\n", layer.describe()));
            }
        }
        out.push_str(&format!("total parameters: {}\n", self.param_count()));
        out
    }
}

/// Shorthand constructors used by tests and the toy-network builders.
impl Model {
    pub fn check_forward_shapes(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let probe = FloatTensor::zeros(input_shape.to_vec());
        if probe.shape()[0] < 2 {
            return Err(Error::shape(
                "shape probe needs batch >= 2 for batch norm".to_string(),
            ));
        }
        Ok(self.forward_infer(&probe)?.shape().to_vec())
    }
}
