//! Convolution lowering: im2col / col2im.
//!
//! Convolutions are realized as GEMM on a patch matrix. Each im2col row is
//! one receptive field, channel-major then row-major within the kernel
//! window; zero padding contributes literal zeros to the patch matrix.

use crate::error::{Error, Result};
use crate::tensor::FloatTensor;

/// Static geometry of a 2-d convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::shape("conv stride must be >= 1"));
        }
        if in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 {
            return Err(Error::shape("conv extents must be positive"));
        }
        Ok(Self { in_channels, out_channels, kernel_h, kernel_w, stride, padding })
    }

    /// Patch length: one im2col row holds `in_channels·kernel_h·kernel_w` values.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    /// Output spatial extents for an input of `h`×`w`, requiring the stride
    /// to divide evenly after padding.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let span_h = (h + 2 * self.padding).checked_sub(self.kernel_h);
        let span_w = (w + 2 * self.padding).checked_sub(self.kernel_w);
        match (span_h, span_w) {
            (Some(sh), Some(sw)) if sh % self.stride == 0 && sw % self.stride == 0 => {
                Ok((sh / self.stride + 1, sw / self.stride + 1))
            }
            _ => Err(Error::shape(format!(
                "conv geometry {}x{} kernel, stride {}, pad {} does not fit {h}x{w} input evenly",
                self.kernel_h, self.kernel_w, self.stride, self.padding
            ))),
        }
    }
}

/// Lowers N×C×H×W input to a (N·Ho·Wo)×(C·kh·kw) patch matrix.
pub fn im2col(x: &FloatTensor, g: &ConvGeometry) -> Result<FloatTensor> {
    let [n, c, h, w] = x.dims4()?;
    if c != g.in_channels {
        return Err(Error::shape(format!(
            "im2col expects {} channels, input has {c}",
            g.in_channels
        )));
    }
    let (ho, wo) = g.output_hw(h, w)?;
    let patch = g.patch_len();
    let mut out = vec![0.0f32; n * ho * wo * patch];
    let data = x.data();
    let pad = g.padding as isize;

    let mut row = 0usize;
    for img in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                let base = row * patch;
                for ch in 0..c {
                    let img_base = (img * c + ch) * h * w;
                    for ky in 0..g.kernel_h {
                        let iy = (oy * g.stride + ky) as isize - pad;
                        for kx in 0..g.kernel_w {
                            let ix = (ox * g.stride + kx) as isize - pad;
                            let col = (ch * g.kernel_h + ky) * g.kernel_w + kx;
                            if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                out[base + col] = data[img_base + iy as usize * w + ix as usize];
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
    Ok(FloatTensor::from_parts(vec![n * ho * wo, patch], out))
}

/// Adjoint of [`im2col`]: scatter-adds patch gradients back onto the input
/// layout. Gradient that fell on padding is dropped.
pub fn col2im(grad_cols: &FloatTensor, g: &ConvGeometry, input_shape: &[usize]) -> Result<FloatTensor> {
    let [n, c, h, w] = match input_shape {
        &[n, c, h, w] => [n, c, h, w],
        other => return Err(Error::shape(format!("col2im input shape must be rank 4, got {other:?}"))),
    };
    if c != g.in_channels {
        return Err(Error::shape(format!(
            "col2im expects {} channels, shape has {c}",
            g.in_channels
        )));
    }
    let (ho, wo) = g.output_hw(h, w)?;
    let patch = g.patch_len();
    let [rows, cols] = grad_cols.dims2()?;
    if rows != n * ho * wo || cols != patch {
        return Err(Error::shape(format!(
            "col2im gradient is {rows}x{cols}, expected {}x{patch}",
            n * ho * wo
        )));
    }
    let mut out = vec![0.0f32; n * c * h * w];
    let data = grad_cols.data();
    let pad = g.padding as isize;

    let mut row = 0usize;
    for img in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                let base = row * patch;
                for ch in 0..c {
                    let img_base = (img * c + ch) * h * w;
                    for ky in 0..g.kernel_h {
                        let iy = (oy * g.stride + ky) as isize - pad;
                        for kx in 0..g.kernel_w {
                            let ix = (ox * g.stride + kx) as isize - pad;
                            if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                let col = (ch * g.kernel_h + ky) * g.kernel_w + kx;
                                out[img_base + iy as usize * w + ix as usize] += data[base + col];
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
    Ok(FloatTensor::from_parts(vec![n, c, h, w], out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::float_gemm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geom(cin: usize, cout: usize, k: usize, s: usize, p: usize) -> ConvGeometry {
        ConvGeometry::new(cin, cout, k, k, s, p).unwrap()
    }

    // Independent oracle: enumerate patches with direct indexing.
    fn patch_oracle(x: &FloatTensor, g: &ConvGeometry) -> FloatTensor {
        let [n, c, h, w] = x.dims4().unwrap();
        let (ho, wo) = g.output_hw(h, w).unwrap();
        let mut rows = Vec::new();
        for img in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    for ch in 0..c {
                        for ky in 0..g.kernel_h {
                            for kx in 0..g.kernel_w {
                                let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                                let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                                let v = if iy >= 0 && (iy as usize) < h && ix >= 0 && (ix as usize) < w {
                                    x.data()[((img * c + ch) * h + iy as usize) * w + ix as usize]
                                } else {
                                    0.0
                                };
                                rows.push(v);
                            }
                        }
                    }
                }
            }
        }
        FloatTensor::from_parts(vec![n * ho * wo, g.patch_len()], rows)
    }

    // Independent oracle: direct nested-loop convolution.
    fn naive_conv(x: &FloatTensor, kernels: &FloatTensor, g: &ConvGeometry) -> FloatTensor {
        let [n, c, h, w] = x.dims4().unwrap();
        let (ho, wo) = g.output_hw(h, w).unwrap();
        let mut out = vec![0.0f32; n * g.out_channels * ho * wo];
        for img in 0..n {
            for oc in 0..g.out_channels {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for ch in 0..c {
                            for ky in 0..g.kernel_h {
                                for kx in 0..g.kernel_w {
                                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                                    let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                                    if iy >= 0 && (iy as usize) < h && ix >= 0 && (ix as usize) < w {
                                        let xv = x.data()
                                            [((img * c + ch) * h + iy as usize) * w + ix as usize];
                                        let kv = kernels.data()
                                            [(oc * c + ch) * g.kernel_h * g.kernel_w
                                                + ky * g.kernel_w
                                                + kx];
                                        acc += xv * kv;
                                    }
                                }
                            }
                        }
                        out[((img * g.out_channels + oc) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        FloatTensor::from_parts(vec![n, g.out_channels, ho, wo], out)
    }

    #[test]
    fn im2col_3x3_with_2x2_kernel() {
        let x = FloatTensor::from_fn(vec![1, 1, 3, 3], |i| (i + 1) as f32);
        let g = geom(1, 1, 2, 1, 0);
        let cols = im2col(&x, &g).unwrap();
        assert_eq!(cols.shape(), &[4, 4]);
        assert_eq!(cols.row(0), &[1.0, 2.0, 4.0, 5.0]);
        assert_eq!(cols, patch_oracle(&x, &g));
    }

    #[test]
    fn im2col_single_patch_is_flattened_input() {
        let x = FloatTensor::from_fn(vec![1, 1, 2, 2], |i| i as f32);
        let cols = im2col(&x, &geom(1, 1, 2, 1, 0)).unwrap();
        assert_eq!(cols.shape(), &[1, 4]);
        assert_eq!(cols.data(), x.data());
    }

    #[test]
    fn im2col_rejects_non_integral_extent() {
        let x = FloatTensor::zeros(vec![1, 1, 5, 5]);
        // (5 - 2) % 2 != 0
        let g = geom(1, 1, 2, 2, 0);
        assert!(matches!(im2col(&x, &g), Err(Error::Shape(_))));
    }

    #[test]
    fn conv_via_im2col_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(c, oc, k, s, p, h, w) in &[
            (1usize, 2usize, 2usize, 1usize, 0usize, 4usize, 4usize),
            (3, 4, 3, 1, 1, 5, 5),
            (2, 3, 3, 2, 1, 5, 7),
        ] {
            let g = ConvGeometry::new(c, oc, k, k, s, p).unwrap();
            let x = FloatTensor::from_fn(vec![2, c, h, w], |_| rng.gen_range(-1.0..1.0));
            let kern = FloatTensor::from_fn(vec![oc, g.patch_len()], |_| rng.gen_range(-1.0..1.0));
            let cols = im2col(&x, &g).unwrap();
            let gemm = float_gemm(&cols, &kern.transpose2d().unwrap()).unwrap();
            let (ho, wo) = g.output_hw(h, w).unwrap();
            let naive = naive_conv(&x, &kern, &g);
            for img in 0..2 {
                for o in 0..oc {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let got = gemm.data()[((img * ho + oy) * wo + ox) * oc + o];
                            let want = naive.data()[((img * oc + o) * ho + oy) * wo + ox];
                            assert!((got - want).abs() < 1e-4, "got {got}, want {want}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn col2im_counts_overlaps() {
        let x = FloatTensor::filled(vec![1, 1, 3, 3], 1.0);
        let g = geom(1, 1, 2, 1, 0);
        let cols = im2col(&x, &g).unwrap();
        let back = col2im(&cols, &g, &[1, 1, 3, 3]).unwrap();
        // center cell is covered by all four 2x2 windows
        assert_eq!(back.data()[4], 4.0);
        assert_eq!(back.data()[0], 1.0);
        assert_eq!(back.data()[1], 2.0);
    }

    #[test]
    fn col2im_zero_is_zero() {
        let g = geom(1, 1, 2, 1, 0);
        let z = FloatTensor::zeros(vec![4, 4]);
        let back = col2im(&z, &g, &[1, 1, 3, 3]).unwrap();
        assert!(back.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn im2col_col2im_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for &(c, k, s, p, h, w) in &[(2usize, 3usize, 1usize, 1usize, 5usize, 5usize), (1, 2, 2, 0, 6, 4)] {
            let g = ConvGeometry::new(c, 1, k, k, s, p).unwrap();
            let x = FloatTensor::from_fn(vec![2, c, h, w], |_| rng.gen_range(-1.0..1.0));
            let (ho, wo) = g.output_hw(h, w).unwrap();
            let y = FloatTensor::from_fn(vec![2 * ho * wo, g.patch_len()], |_| rng.gen_range(-1.0..1.0));
            let lhs: f64 = im2col(&x, &g)
                .unwrap()
                .data()
                .iter()
                .zip(y.data())
                .map(|(a, b)| (*a as f64) * (*b as f64))
                .sum();
            let rhs: f64 = x
                .data()
                .iter()
                .zip(col2im(&y, &g, x.shape()).unwrap().data())
                .map(|(a, b)| (*a as f64) * (*b as f64))
                .sum();
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            assert!((lhs - rhs).abs() / scale < 1e-6, "adjoint broke: {lhs} vs {rhs}");
        }
    }
}
