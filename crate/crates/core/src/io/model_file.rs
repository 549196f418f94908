//! The .bnnx model container. Little-endian throughout; binary weights are
//! stored as packed sign words exactly as binary_gemm consumes them, so a
//! loaded model reproduces the original's forward outputs bit for bit.
//!
//! Layout: magic "BNNX", format version u16, layer count u32, then one
//! record per layer: kind tag u8, geometry integers u32, parameter blobs.

use super::bytes::{push_f32_le, push_i32_le, push_u16_le, push_u32_le, push_u64_le, Reader};
use crate::bits::{pack_signs, unpack, BitMatrix};
use crate::conv::ConvGeometry;
use crate::error::{Error, Result};
use crate::layers::{BatchNorm, BinaryConv2d, BinaryDense, Dense, Flatten, Layer, MaxPool2d, ShiftNorm, Sign};
use crate::model::Model;
use crate::tensor::FloatTensor;

const FORMAT: &str = "bnnx";
const MAGIC: &[u8; 4] = b"BNNX";
pub const FORMAT_VERSION: u16 = 1;

const TAG_BINARY_DENSE: u8 = 1;
const TAG_BINARY_CONV2D: u8 = 2;
const TAG_DENSE: u8 = 3;
const TAG_BATCH_NORM: u8 = 4;
const TAG_SIGN: u8 = 5;
const TAG_MAX_POOL2D: u8 = 6;
const TAG_FLATTEN: u8 = 7;
const TAG_SHIFT_NORM: u8 = 8;

fn push_bits(out: &mut Vec<u8>, bits: &BitMatrix) {
    for &w in bits.words() {
        push_u64_le(out, w);
    }
}

fn push_floats(out: &mut Vec<u8>, t: &FloatTensor) {
    for &v in t.data() {
        push_f32_le(out, v);
    }
}

/// Serializes a model. Binary layers persist only their weight signs; the
/// latent magnitudes are training state, not inference behavior.
pub fn save_model(model: &Model) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_u16_le(&mut out, FORMAT_VERSION);
    push_u32_le(&mut out, model.len() as u32);
    for layer in model.layers() {
        match layer {
            Layer::BinaryDense(l) => {
                out.push(TAG_BINARY_DENSE);
                push_u32_le(&mut out, l.out_dim() as u32);
                push_u32_le(&mut out, l.in_dim() as u32);
                push_bits(&mut out, &pack_signs(l.weight())?);
            }
            Layer::BinaryConv2d(l) => {
                out.push(TAG_BINARY_CONV2D);
                let g = l.geometry();
                for v in [g.in_channels, g.out_channels, g.kernel_h, g.kernel_w, g.stride, g.padding] {
                    push_u32_le(&mut out, v as u32);
                }
                push_bits(&mut out, &pack_signs(l.weight())?);
            }
            Layer::Dense(l) => {
                out.push(TAG_DENSE);
                push_u32_le(&mut out, l.out_dim() as u32);
                push_u32_le(&mut out, l.in_dim() as u32);
                push_floats(&mut out, l.weight());
                push_floats(&mut out, l.bias());
            }
            Layer::BatchNorm(l) => {
                out.push(TAG_BATCH_NORM);
                push_u32_le(&mut out, l.channels() as u32);
                push_f32_le(&mut out, l.momentum());
                push_f32_le(&mut out, l.eps());
                push_floats(&mut out, l.gamma());
                push_floats(&mut out, l.beta());
                push_floats(&mut out, l.running_mean());
                push_floats(&mut out, l.running_var());
            }
            Layer::Sign(_) => out.push(TAG_SIGN),
            Layer::MaxPool2d(l) => {
                out.push(TAG_MAX_POOL2D);
                push_u32_le(&mut out, l.window() as u32);
                push_u32_le(&mut out, l.stride() as u32);
            }
            Layer::Flatten(_) => out.push(TAG_FLATTEN),
            Layer::ShiftNorm(l) => {
                out.push(TAG_SHIFT_NORM);
                push_u32_le(&mut out, l.channels() as u32);
                for &s in l.signs() {
                    out.push(s as u8);
                }
                for &e in l.exponents() {
                    push_i32_le(&mut out, e);
                }
                for &o in l.offsets() {
                    push_f32_le(&mut out, o);
                }
            }
        }
    }
    Ok(out)
}

fn read_bits(r: &mut Reader<'_>, rows: usize, cols: usize, what: &str) -> Result<BitMatrix> {
    let words_per_row = cols.div_ceil(64);
    let n = rows
        .checked_mul(words_per_row)
        .ok_or_else(|| r.malformed(format!("{what}: size overflows")))?;
    let words = r.u64s(n, what)?;
    BitMatrix::from_words(rows, cols, words)
}

fn read_tensor(r: &mut Reader<'_>, shape: Vec<usize>, what: &str) -> Result<FloatTensor> {
    let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let n = n.ok_or_else(|| r.malformed(format!("{what}: size overflows")))?;
    FloatTensor::new(shape, r.f32s(n, what)?)
}

fn dim(v: u32, what: &str) -> Result<usize> {
    if v == 0 {
        return Err(Error::Malformed {
            format: FORMAT,
            msg: format!("{what} is zero"),
        });
    }
    Ok(v as usize)
}

pub fn load_model(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader::new(bytes, FORMAT);
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::BadMagic { format: FORMAT });
    }
    let version = r.u16_le("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            format: FORMAT,
            version,
        });
    }
    let count = r.u32_le("layer count")?;
    let mut layers = Vec::new();
    for i in 0..count {
        let tag = r.u8("layer tag")?;
        let what = format!("layer {i}");
        let layer = match tag {
            TAG_BINARY_DENSE => {
                let out = dim(r.u32_le(&what)?, "out dim")?;
                let inp = dim(r.u32_le(&what)?, "in dim")?;
                let bits = read_bits(&mut r, out, inp, &what)?;
                Layer::BinaryDense(BinaryDense::from_weight(unpack(&bits))?)
            }
            TAG_BINARY_CONV2D => {
                let mut g = [0usize; 6];
                for (slot, name) in g.iter_mut().zip([
                    "in channels",
                    "out channels",
                    "kernel h",
                    "kernel w",
                    "stride",
                    "padding",
                ]) {
                    let v = r.u32_le(&what)?;
                    *slot = if name == "padding" {
                        v as usize
                    } else {
                        dim(v, name)?
                    };
                }
                let geom = ConvGeometry::new(g[0], g[1], g[2], g[3], g[4], g[5])?;
                let bits = read_bits(&mut r, geom.out_channels, geom.patch_len(), &what)?;
                Layer::BinaryConv2d(BinaryConv2d::from_weight(geom, unpack(&bits))?)
            }
            TAG_DENSE => {
                let out = dim(r.u32_le(&what)?, "out dim")?;
                let inp = dim(r.u32_le(&what)?, "in dim")?;
                let w = read_tensor(&mut r, vec![out, inp], &what)?;
                let b = read_tensor(&mut r, vec![out], &what)?;
                Layer::Dense(Dense::from_params(w, b)?)
            }
            TAG_BATCH_NORM => {
                let c = dim(r.u32_le(&what)?, "channels")?;
                let momentum = r.f32_le(&what)?;
                let eps = r.f32_le(&what)?;
                let gamma = read_tensor(&mut r, vec![c], &what)?;
                let beta = read_tensor(&mut r, vec![c], &what)?;
                let mean = read_tensor(&mut r, vec![c], &what)?;
                let var = read_tensor(&mut r, vec![c], &what)?;
                Layer::BatchNorm(BatchNorm::from_params(gamma, beta, mean, var, momentum, eps)?)
            }
            TAG_SIGN => Layer::Sign(Sign::new()),
            TAG_MAX_POOL2D => {
                let window = dim(r.u32_le(&what)?, "window")?;
                let stride = dim(r.u32_le(&what)?, "stride")?;
                Layer::MaxPool2d(MaxPool2d::new(window, stride)?)
            }
            TAG_FLATTEN => Layer::Flatten(Flatten::new()),
            TAG_SHIFT_NORM => {
                let c = dim(r.u32_le(&what)?, "channels")?;
                let signs = r.i8s(c, &what)?;
                let exps = r.i32s(c, &what)?;
                let offsets = r.f32s(c, &what)?;
                if let Some(bad) = offsets.iter().find(|o| !o.is_finite()) {
                    return Err(r.malformed(format!("non-finite shift offset {bad}")));
                }
                Layer::ShiftNorm(ShiftNorm::from_parts(signs, exps, offsets)?)
            }
            other => {
                return Err(Error::UnknownTag {
                    format: FORMAT,
                    tag: other,
                })
            }
        };
        layers.push(layer);
    }
    r.expect_end()?;
    Ok(Model::new(layers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_model(seed: u64) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geom = ConvGeometry::new(1, 4, 3, 3, 1, 1).unwrap();
        let mut bn = BatchNorm::new(10);
        // move running stats off their defaults so the round-trip carries them
        let x = FloatTensor::from_fn(vec![3, 10], |_| rng.gen_range(-2.0..2.0));
        bn.forward_train(&x).unwrap();
        Model::new(vec![
            Layer::BinaryConv2d(BinaryConv2d::new(geom, &mut rng)),
            Layer::MaxPool2d(MaxPool2d::new(2, 2).unwrap()),
            Layer::Flatten(Flatten::new()),
            Layer::BinaryDense(BinaryDense::new(4 * 4 * 4, 10, &mut rng)),
            Layer::BatchNorm(bn),
            Layer::Sign(Sign::new()),
            Layer::Dense(Dense::new(10, 3, &mut rng)),
        ])
    }

    #[test]
    fn empty_model_is_header_only() {
        let bytes = save_model(&Model::default()).unwrap();
        assert_eq!(bytes.len(), 10);
        assert!(load_model(&bytes).unwrap().is_empty());
    }

    #[test]
    fn roundtrip_preserves_forward_outputs() {
        let model = sample_model(120);
        let bytes = save_model(&model).unwrap();
        let loaded = load_model(&bytes).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(121);
        let x = FloatTensor::from_fn(vec![2, 1, 8, 8], |_| rng.gen_range(0.0..1.0));
        let a = model.forward_infer(&x).unwrap();
        let b = loaded.forward_infer(&x).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn serialization_is_deterministic() {
        let model = sample_model(122);
        assert_eq!(save_model(&model).unwrap(), save_model(&model).unwrap());
    }

    #[test]
    fn rejects_bad_magic_version_and_tag() {
        let model = sample_model(123);
        let good = save_model(&model).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(load_model(&bad), Err(Error::BadMagic { .. })));

        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(
            load_model(&bad),
            Err(Error::UnsupportedVersion { version: 9, .. })
        ));

        let mut bad = good;
        bad[10] = 200; // first layer tag
        assert!(matches!(
            load_model(&bad),
            Err(Error::UnknownTag { tag: 200, .. })
        ));
    }

    #[test]
    fn rejects_truncation_anywhere() {
        let bytes = save_model(&sample_model(124)).unwrap();
        for cut in [3, 9, 11, bytes.len() / 2, bytes.len() - 1] {
            let err = load_model(&bytes[..cut]).unwrap_err();
            assert!(
                matches!(err, Error::Truncated { .. } | Error::BadMagic { .. }),
                "cut at {cut}: {err}"
            );
        }
    }

    #[test]
    fn rejects_trailing_bytes() {
        let mut bytes = save_model(&sample_model(125)).unwrap();
        bytes.push(0);
        assert!(matches!(load_model(&bytes), Err(Error::Malformed { .. })));
    }

    #[test]
    fn shift_norm_roundtrip() {
        let model = sample_model(126).fold_shift_norms().unwrap();
        let bytes = save_model(&model).unwrap();
        let loaded = load_model(&bytes).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(127);
        let x = FloatTensor::from_fn(vec![2, 1, 8, 8], |_| rng.gen_range(0.0..1.0));
        assert_eq!(
            model.forward_infer(&x).unwrap().data(),
            loaded.forward_infer(&x).unwrap().data()
        );
    }
}
