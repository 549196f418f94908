//! Architecture strings.
//!
//! A model is a whitespace-separated list of stages, starting with the
//! input extent:
//!
//!   in:1x28x28 bconv:16x3s1p1 pool:2 bn sign flatten bdense:128 bn sign dense:10
//!
//! Stages:
//!   in:CxHxW | in:D      image planes or a flat vector
//!   bconv:OxK[sS][pP]    binary conv, O filters, KxK kernel, stride S (1), pad P (0)
//!   pool:W[sS]           max pool, WxW window, stride S (defaults to W)
//!   bn                   batch norm over the current channel axis
//!   sign                 binarize activations to ±1
//!   flatten              NxCxHxW -> Nx(C·H·W)
//!   bdense:N | dense:N   binary / float fully connected, N outputs
//!
//! Shapes are tracked while parsing, so a stage that cannot fit its input
//! is rejected here with the offending token named, not deep inside a
//! forward pass. The last stage must be dense or bdense; its width is the
//! class count.

use bnnx::conv::ConvGeometry;
use bnnx::layers::{BatchNorm, BinaryConv2d, BinaryDense, Dense, Flatten, Layer, MaxPool2d, Sign};
use bnnx::Model;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{CliError, CliResult};

pub struct ParsedArch {
    pub model: Model,
    /// Per-sample shape, without the batch axis.
    pub input_shape: Vec<usize>,
    pub classes: usize,
}

#[derive(Clone, Copy)]
enum Shape {
    Planes { c: usize, h: usize, w: usize },
    Flat(usize),
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Usage(format!("bad --arch: {}", msg.into()))
}

/// Positive integer. Zero-sized stages are always a mistake.
fn dim(s: &str) -> Option<usize> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Some(v),
        _ => None,
    }
}

fn input_spec(tok: &str) -> CliResult<Shape> {
    let spec = match tok.split_once(':') {
        Some(("in", spec)) => spec,
        _ => return Err(bad(format!("first stage must be in:CxHxW or in:D, got {tok:?}"))),
    };
    let parts: Vec<&str> = spec.split('x').collect();
    let parsed: Option<Vec<usize>> = parts.iter().map(|&p| dim(p)).collect();
    match parsed.as_deref() {
        Some([d]) => Ok(Shape::Flat(*d)),
        Some([c, h, w]) => Ok(Shape::Planes {
            c: *c,
            h: *h,
            w: *w,
        }),
        _ => Err(bad(format!("input extent {spec:?} (want CxHxW or D)"))),
    }
}

/// OxK with optional sS then pP, in that order.
fn conv_spec(a: &str) -> Option<(usize, usize, usize, usize)> {
    let (out, rest) = a.split_once('x')?;
    let out = dim(out)?;
    let cut = rest.find(['s', 'p']).unwrap_or(rest.len());
    let k = dim(&rest[..cut])?;
    let mut rest = &rest[cut..];
    let mut stride = 1;
    let mut pad = 0;
    if let Some(r) = rest.strip_prefix('s') {
        let cut = r.find('p').unwrap_or(r.len());
        stride = dim(&r[..cut])?;
        rest = &r[cut..];
    }
    if let Some(r) = rest.strip_prefix('p') {
        pad = r.parse().ok()?;
        rest = "";
    }
    if rest.is_empty() {
        Some((out, k, stride, pad))
    } else {
        None
    }
}

fn pool_spec(a: &str) -> Option<(usize, usize)> {
    match a.split_once('s') {
        Some((w, s)) => Some((dim(w)?, dim(s)?)),
        None => {
            let w = dim(a)?;
            Some((w, w))
        }
    }
}

pub fn parse(text: &str, seed: u64) -> CliResult<ParsedArch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tokens = text.split_whitespace();
    let first = tokens.next().ok_or_else(|| bad("empty string"))?;
    let mut shape = input_spec(first)?;
    let input_shape = match shape {
        Shape::Planes { c, h, w } => vec![c, h, w],
        Shape::Flat(d) => vec![d],
    };

    let mut layers = Vec::new();
    let mut classes = None;
    for tok in tokens {
        classes = None;
        let (head, arg) = match tok.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (tok, None),
        };
        match (head, arg) {
            ("bconv", Some(a)) => {
                let (out, k, stride, pad) = conv_spec(a)
                    .ok_or_else(|| bad(format!("{tok:?} (want bconv:OxK[sS][pP])")))?;
                let Shape::Planes { c, h, w } = shape else {
                    return Err(bad(format!("{tok:?} needs image input, have a flat vector")));
                };
                let g = ConvGeometry::new(c, out, k, k, stride, pad)
                    .map_err(|e| bad(format!("{tok:?}: {e}")))?;
                let (ho, wo) = g
                    .output_hw(h, w)
                    .map_err(|e| bad(format!("{tok:?} on a {h}x{w} input: {e}")))?;
                layers.push(Layer::BinaryConv2d(BinaryConv2d::new(g, &mut rng)));
                shape = Shape::Planes { c: out, h: ho, w: wo };
            }
            ("pool", Some(a)) => {
                let (win, stride) =
                    pool_spec(a).ok_or_else(|| bad(format!("{tok:?} (want pool:W[sS])")))?;
                let Shape::Planes { c, h, w } = shape else {
                    return Err(bad(format!("{tok:?} needs image input, have a flat vector")));
                };
                let p = MaxPool2d::new(win, stride).map_err(|e| bad(format!("{tok:?}: {e}")))?;
                let (ho, wo) = p
                    .output_hw(h, w)
                    .map_err(|e| bad(format!("{tok:?} on a {h}x{w} input: {e}")))?;
                layers.push(Layer::MaxPool2d(p));
                shape = Shape::Planes { c, h: ho, w: wo };
            }
            ("bn", None) => {
                let width = match shape {
                    Shape::Planes { c, .. } => c,
                    Shape::Flat(d) => d,
                };
                layers.push(Layer::BatchNorm(BatchNorm::new(width)));
            }
            ("sign", None) => layers.push(Layer::Sign(Sign::new())),
            ("flatten", None) => {
                let Shape::Planes { c, h, w } = shape else {
                    return Err(bad("flatten needs image input, have a flat vector"));
                };
                layers.push(Layer::Flatten(Flatten::new()));
                shape = Shape::Flat(c * h * w);
            }
            ("bdense", Some(a)) | ("dense", Some(a)) => {
                let n = dim(a).ok_or_else(|| bad(format!("dense width in {tok:?}")))?;
                let Shape::Flat(d) = shape else {
                    return Err(bad(format!("{tok:?} needs a flat input; add flatten first")));
                };
                layers.push(if head == "bdense" {
                    Layer::BinaryDense(BinaryDense::new(d, n, &mut rng))
                } else {
                    Layer::Dense(Dense::new(d, n, &mut rng))
                });
                shape = Shape::Flat(n);
                classes = Some(n);
            }
            _ => return Err(bad(format!("unknown stage {tok:?}"))),
        }
    }

    let classes = classes.ok_or_else(|| bad("the last stage must be dense:N or bdense:N"))?;
    Ok(ParsedArch {
        model: Model::new(layers),
        input_shape,
        classes,
    })
}
