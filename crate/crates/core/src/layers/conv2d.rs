//! Binary 2-d convolution, lowered to the XNOR GEMM via im2col.

use crate::bits::{binary_gemm, pack_signs, unpack};
use crate::conv::{col2im, im2col, ConvGeometry};
use crate::error::{Error, Result};
use crate::tensor::{float_gemm, FloatTensor};
use rand::Rng;

/// Convolution with ±1 effective kernels.
///
/// Latent kernels are stored flattened out_channels×(in_channels·kh·kw),
/// which is exactly the pre-transposed GEMM operand. When the input is
/// ±1-valued the padded patch matrix is binarized (padding zeros map to +1
/// via sign(0) = +1) and multiplied on the XNOR path; real-valued inputs
/// (first layer) keep the patch matrix in the float domain.
#[derive(Clone, Debug)]
pub struct BinaryConv2d {
    geometry: ConvGeometry,
    weight: FloatTensor, // out_ch × patch_len latent
    grad_weight: FloatTensor,
    cache: Option<ConvCache>,
}

#[derive(Clone, Debug)]
struct ConvCache {
    cols: FloatTensor,       // the patch matrix actually multiplied
    weight_bin: FloatTensor, // sign(latent)
    input_shape: Vec<usize>,
    out_hw: (usize, usize),
}

impl BinaryConv2d {
    pub fn new(geometry: ConvGeometry, rng: &mut impl Rng) -> Self {
        let weight = FloatTensor::from_fn(vec![geometry.out_channels, geometry.patch_len()], |_| {
            rng.gen_range(-1.0..1.0)
        });
        Self {
            grad_weight: FloatTensor::zeros(weight.shape().to_vec()),
            weight,
            geometry,
            cache: None,
        }
    }

    pub fn from_weight(geometry: ConvGeometry, weight: FloatTensor) -> Result<Self> {
        let [oc, patch] = weight.dims2()?;
        if oc != geometry.out_channels || patch != geometry.patch_len() {
            return Err(Error::shape(format!(
                "conv weight {oc}x{patch} does not match geometry {}x{}",
                geometry.out_channels,
                geometry.patch_len()
            )));
        }
        Ok(Self {
            grad_weight: FloatTensor::zeros(weight.shape().to_vec()),
            weight,
            geometry,
            cache: None,
        })
    }

    pub fn geometry(&self) -> &ConvGeometry {
        &self.geometry
    }

    pub fn weight(&self) -> &FloatTensor {
        &self.weight
    }

    fn forward(&self, x: &FloatTensor) -> Result<(FloatTensor, ConvCache)> {
        let [n, _, h, w] = x.dims4()?;
        let g = &self.geometry;
        let (ho, wo) = g.output_hw(h, w)?;
        let raw_cols = im2col(x, g)?;
        // Binarize the padded patches when the input itself is ±1; the
        // decision is made on the input so padding zeros (→ +1) cannot
        // push binary layers off the XNOR path.
        let w_bits = pack_signs(&self.weight)?;
        let weight_bin = unpack(&w_bits);
        let (cols, flat) = if x.is_pm_one() {
            let col_bits = pack_signs(&raw_cols)?;
            let flat = binary_gemm(&col_bits, &w_bits)?;
            (unpack(&col_bits), flat)
        } else {
            let flat = float_gemm(&raw_cols, &weight_bin.transpose2d()?)?;
            (raw_cols, flat)
        };
        // (n·ho·wo)×oc → n×oc×ho×wo
        let oc = g.out_channels;
        let mut out = vec![0.0f32; n * oc * ho * wo];
        let fd = flat.data();
        for img in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    let row = (img * ho + oy) * wo + ox;
                    for c in 0..oc {
                        out[((img * oc + c) * ho + oy) * wo + ox] = fd[row * oc + c];
                    }
                }
            }
        }
        let y = FloatTensor::from_parts(vec![n, oc, ho, wo], out);
        let cache = ConvCache {
            cols,
            weight_bin,
            input_shape: x.shape().to_vec(),
            out_hw: (ho, wo),
        };
        Ok((y, cache))
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
            .ok_or_else(|| Error::state("binary conv backward without a training forward"))?;
        let [n, oc, ho, wo] = grad_out.dims4()?;
        if oc != self.geometry.out_channels || (ho, wo) != cache.out_hw {
            return Err(Error::shape(format!(
                "conv gradient shape {:?} does not match forward output",
                grad_out.shape()
            )));
        }
        // n×oc×ho×wo → (n·ho·wo)×oc, undoing the forward permutation
        let mut flat = vec![0.0f32; n * ho * wo * oc];
        let gd = grad_out.data();
        for img in 0..n {
            for c in 0..oc {
                for oy in 0..ho {
                    for ox in 0..wo {
                        flat[((img * ho + oy) * wo + ox) * oc + c] =
                            gd[((img * oc + c) * ho + oy) * wo + ox];
                    }
                }
            }
        }
        let grad_flat = FloatTensor::from_parts(vec![n * ho * wo, oc], flat);
        let grad_cols = float_gemm(&grad_flat, &cache.weight_bin)?;
        self.grad_weight = float_gemm(&grad_flat.transpose2d()?, &cache.cols)?;
        col2im(&grad_cols, &self.geometry, &cache.input_shape)
    }

    pub(crate) fn param_slots(&mut self) -> Vec<super::ParamSlot<'_>> {
        vec![super::ParamSlot {
            value: &mut self.weight,
            grad: &mut self.grad_weight,
            clip_unit: true,
        }]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_plus_kernel_sums_patches() {
        let g = ConvGeometry::new(1, 1, 2, 2, 1, 0).unwrap();
        let layer = BinaryConv2d::from_weight(g, FloatTensor::filled(vec![1, 4], 0.5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = FloatTensor::from_fn(vec![1, 1, 3, 3], |_| if rng.gen::<bool>() { 1.0 } else { -1.0 });
        let y = layer.forward_infer(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        for &v in y.data() {
            assert!([-4.0, -2.0, 0.0, 2.0, 4.0].contains(&v), "patch sum {v} out of range");
        }
        // spot-check the first patch sum
        let d = x.data();
        let want = d[0] + d[1] + d[3] + d[4];
        assert_eq!(y.data()[0], want);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let g = ConvGeometry::new(1, 1, 1, 1, 1, 0).unwrap();
        let layer = BinaryConv2d::from_weight(g, FloatTensor::filled(vec![1, 1], 1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let x = FloatTensor::from_fn(vec![2, 1, 3, 3], |_| if rng.gen::<bool>() { 1.0 } else { -1.0 });
        let y = layer.forward_infer(&x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn matches_naive_binary_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for &(cin, cout, k, s, p, h, w) in &[
            (1usize, 2usize, 2usize, 1usize, 0usize, 4usize, 4usize),
            (2, 3, 3, 1, 1, 5, 5),
            (3, 2, 3, 2, 1, 5, 5),
        ] {
            let g = ConvGeometry::new(cin, cout, k, k, s, p).unwrap();
            let layer = BinaryConv2d::new(g, &mut rng);
            let x = FloatTensor::from_fn(vec![2, cin, h, w], |_| {
                if rng.gen::<bool>() { 1.0 } else { -1.0 }
            });
            let y = layer.forward_infer(&x).unwrap();

            // direct loop over the binarized kernels; padding contributes
            // +1 (sign of zero) exactly like the packed path
            let wb = unpack(&pack_signs(layer.weight()).unwrap());
            let (ho, wo) = g.output_hw(h, w).unwrap();
            for img in 0..2 {
                for oc in 0..cout {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut acc = 0.0f32;
                            for ch in 0..cin {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let iy = (oy * s + ky) as isize - p as isize;
                                        let ix = (ox * s + kx) as isize - p as isize;
                                        let xv = if iy >= 0
                                            && (iy as usize) < h
                                            && ix >= 0
                                            && (ix as usize) < w
                                        {
                                            x.data()[((img * cin + ch) * h + iy as usize) * w
                                                + ix as usize]
                                        } else {
                                            1.0 // padded zero binarizes to +1
                                        };
                                        let kv = wb.data()[(oc * cin + ch) * k * k + ky * k + kx];
                                        acc += xv * kv;
                                    }
                                }
                            }
                            let got = y.data()[((img * cout + oc) * ho + oy) * wo + ox];
                            assert_eq!(got, acc);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn backward_requires_forward() {
        let g = ConvGeometry::new(1, 1, 2, 2, 1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let mut layer = BinaryConv2d::new(g, &mut rng);
        assert!(matches!(
            layer.backward(&FloatTensor::zeros(vec![1, 1, 2, 2])),
            Err(Error::State(_))
        ));
    }
}
