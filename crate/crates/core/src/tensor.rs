//! Dense real-valued tensors.
//!
//! [`FloatTensor`] is the universal interchange type: row-major `f32` storage
//! with the last axis fastest. Everything that is not packed into bits flows
//! through it: activations, latent weights, gradients, decoded images.

use crate::error::{Error, Result};
use rayon::prelude::*;

/// Dense n-dimensional tensor of `f32`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatTensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl FloatTensor {
    /// Builds a tensor from explicit contents, validating that the data
    /// length matches the shape and every value is finite.
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::shape(format!("zero extent in shape {shape:?}")));
        }
        if data.len() != numel {
            return Err(Error::shape(format!(
                "shape {shape:?} wants {numel} elements, got {}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite tensor element {bad}")));
        }
        Ok(Self { shape, data })
    }

    /// Internal constructor for values produced by the crate itself.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Self { shape, data: vec![0.0; numel] }
    }

    pub fn filled(shape: impl Into<Vec<usize>>, value: f32) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Self { shape, data: vec![value; numel] }
    }

    /// Builds a tensor by evaluating `f` at each flat index.
    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> f32) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        let data = (0..numel).map(|i| f(i)).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Extent of axis `axis`.
    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} ({} elements) to {shape:?} ({numel})",
                self.shape,
                self.data.len()
            )));
        }
        Ok(Self { shape, data: self.data })
    }

    /// Elementwise map into a new tensor.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise map with the flat element index.
    pub fn map_indexed(&self, f: impl Fn(usize, f32) -> f32) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().enumerate().map(|(i, &v)| f(i, v)).collect(),
        }
    }

    /// True when every element is exactly +1.0 or -1.0.
    pub fn is_pm_one(&self) -> bool {
        self.data.iter().all(|&v| v == 1.0 || v == -1.0)
    }

    /// Rank-2 transpose.
    pub fn transpose2d(&self) -> Result<Self> {
        let [r, c] = self.dims2()?;
        let mut out = vec![0.0f32; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self { shape: vec![c, r], data: out })
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[f32] {
        let c = self.shape[self.shape.len() - 1];
        &self.data[i * c..(i + 1) * c]
    }

    pub(crate) fn dims2(&self) -> Result<[usize; 2]> {
        match self.shape[..] {
            [r, c] => Ok([r, c]),
            _ => Err(Error::shape(format!("expected rank 2, got shape {:?}", self.shape))),
        }
    }

    pub(crate) fn dims4(&self) -> Result<[usize; 4]> {
        match self.shape[..] {
            [n, c, h, w] => Ok([n, c, h, w]),
            _ => Err(Error::shape(format!("expected rank 4, got shape {:?}", self.shape))),
        }
    }
}

/// Standard dense matrix product: `a` is m×k, `b` is k×n, result m×n.
///
/// Each output element is a sequential dot product over `k`, so results do
/// not depend on how rows are scheduled across threads.
pub fn float_gemm(a: &FloatTensor, b: &FloatTensor) -> Result<FloatTensor> {
    let [m, ka] = a.dims2()?;
    let [kb, n] = b.dims2()?;
    if ka != kb {
        return Err(Error::shape(format!(
            "gemm inner dimension mismatch: {m}x{ka} vs {kb}x{n}"
        )));
    }
    let mut out = vec![0.0f32; m * n];
    let (ad, bd) = (a.data(), b.data());
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let arow = &ad[i * ka..(i + 1) * ka];
        for (j, slot) in row.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for k in 0..ka {
                acc += arow[k] * bd[k * n + j];
            }
            *slot = acc;
        }
    });
    Ok(FloatTensor::from_parts(vec![m, n], out))
}
