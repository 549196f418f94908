//! Spatial max pooling and the conv-to-dense flatten shim.

use crate::error::{Error, Result};
use crate::tensor::FloatTensor;

/// Square-window max pooling. The forward pass records argmax positions;
/// ties go to the lowest linear index so backward is deterministic.
#[derive(Clone, Debug)]
pub struct MaxPool2d {
    window: usize,
    stride: usize,
    cache: Option<PoolCache>,
}

#[derive(Clone, Debug)]
struct PoolCache {
    argmax: Vec<usize>, // flat input index per output element
    input_shape: Vec<usize>,
}

impl MaxPool2d {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        if window == 0 || stride == 0 {
            return Err(Error::shape(format!(
                "pool window {window} / stride {stride} must be positive"
            )));
        }
        Ok(Self {
            window,
            stride,
            cache: None,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let fit = |extent: usize| -> Result<usize> {
            if extent < self.window || (extent - self.window) % self.stride != 0 {
                return Err(Error::shape(format!(
                    "pool window {}/stride {} does not tile extent {extent}",
                    self.window, self.stride
                )));
            }
            Ok((extent - self.window) / self.stride + 1)
        };
        Ok((fit(h)?, fit(w)?))
    }

    fn forward(&self, x: &FloatTensor) -> Result<(FloatTensor, PoolCache)> {
        let [n, c, h, w] = x.dims4()?;
        let (ho, wo) = self.output_hw(h, w)?;
        let xd = x.data();
        let mut out = vec![0.0f32; n * c * ho * wo];
        let mut argmax = vec![0usize; out.len()];
        for img in 0..n {
            for ch in 0..c {
                let plane = (img * c + ch) * h * w;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut best_idx = plane + oy * self.stride * w + ox * self.stride;
                        let mut best = xd[best_idx];
                        for ky in 0..self.window {
                            for kx in 0..self.window {
                                let idx =
                                    plane + (oy * self.stride + ky) * w + ox * self.stride + kx;
                                if xd[idx] > best {
                                    best = xd[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        let o = ((img * c + ch) * ho + oy) * wo + ox;
                        out[o] = best;
                        argmax[o] = best_idx;
                    }
                }
            }
        }
        Ok((
            FloatTensor::from_parts(vec![n, c, ho, wo], out),
            PoolCache {
                argmax,
                input_shape: x.shape().to_vec(),
            },
        ))
    }

    pub fn forward_train(&mut self, x: &FloatTensor) -> Result<FloatTensor> {
        let (y, cache) = self.forward(x)?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn forward_infer(&self, x: &FloatTensor) -> Result<FloatTensor> {
        Ok(self.forward(x)?.0)
    }

    pub fn backward(&mut self, grad_out: &FloatTensor) -> Result<FloatTensor> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::state("max pool backward without a training forward"))?;
        if grad_out.numel() != cache.argmax.len() {
            return Err(Error::shape(format!(
                "pool gradient has {} elements, expected {}",
                grad_out.numel(),
                cache.argmax.len()
            )));
        }
        let mut grad_in = vec![0.0f32; cache.input_shape.iter().product()];
        for (g, &idx) in grad_out.data().iter().zip(&cache.argmax) {
            grad_in[idx] += g;
        }
        Ok(FloatTensor::from_parts(cache.input_shape, grad_in))
    }
}

/// Reshapes N×C×H×W activations to N×(C·H·W) rows; rank 2 passes through.
#[derive(Clone, Debug, Default)]
pub struct Flatten {
    cache: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }

    fn flat_shape(x: &FloatTensor) -> Result<Vec<usize>> {
        match x.shape() {
            [n, rest @ ..] if !rest.is_empty() => Ok(vec![*n, rest.iter().product()]),
            other => Err(Error::shape(format!("cannot flatten shape {other:?}"))),
        }
    }

    pub fn forward_train(&mut self, x: &FloatTensor) -> Result<FloatTensor> {
        self.cache = Some(x.shape().to_vec());
        x.clone().reshape(Self::flat_shape(x)?)
    }

    pub fn forward_infer(&self, x: &FloatTensor) -> Result<FloatTensor> {
        x.clone().reshape(Self::flat_shape(x)?)
    }

    pub fn backward(&mut self, grad_out: &FloatTensor) -> Result<FloatTensor> {
        let shape = self
            .cache
            .take()
            .ok_or_else(|| Error::state("flatten backward without a training forward"))?;
        grad_out.clone().reshape(shape)
    }
}
