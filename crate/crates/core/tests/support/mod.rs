//! Shared fixtures for the acceptance suite.

use bnnx::conv::ConvGeometry;
use bnnx::data::Dataset;
use bnnx::io::{parse_idx, write_idx_u8};
use bnnx::layers::{
    BatchNorm, BinaryConv2d, BinaryDense, Dense, Flatten, Layer, MaxPool2d, Sign,
};
use bnnx::optim::{AdamParams, OptimKind};
use bnnx::synth;
use bnnx::train::{TrainConfig, Trainer};
use bnnx::{FloatTensor, Model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rand_tensor(shape: &[usize], rng: &mut impl Rng, lo: f32, hi: f32) -> FloatTensor {
    FloatTensor::from_fn(shape.to_vec(), |_| rng.gen_range(lo..hi))
}

pub fn rand_pm_one(shape: &[usize], rng: &mut impl Rng) -> FloatTensor {
    FloatTensor::from_fn(shape.to_vec(), |_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
}

/// Scalar probe J = sum(y * r), accumulated in f64.
pub fn weighted_sum(y: &FloatTensor, r: &FloatTensor) -> f64 {
    assert_eq!(y.shape(), r.shape(), "probe shape mismatch");
    y.data()
        .iter()
        .zip(r.data())
        .map(|(&a, &b)| a as f64 * b as f64)
        .sum()
}

/// Relative error with a floored denominator; pairs below the floor are
/// held to the same bound in absolute terms.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central finite difference of `eval` with respect to every coordinate
/// of `x`.
pub fn fd_wrt(x: &FloatTensor, h: f64, mut eval: impl FnMut(&FloatTensor) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.numel())
        .map(|i| {
            let orig = x.data()[i];
            probe.data_mut()[i] = orig + h as f32;
            let plus = eval(&probe);
            probe.data_mut()[i] = orig - h as f32;
            let minus = eval(&probe);
            probe.data_mut()[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Asserts `analytic` against a finite-difference vector and returns the
/// worst error seen.
pub fn check_grad(name: &str, analytic: &[f32], fd: &[f64], tol: f64, floor: f64) -> f64 {
    assert_eq!(analytic.len(), fd.len(), "{name}: gradient length mismatch");
    let mut worst = 0.0f64;
    for (i, (&a, &f)) in analytic.iter().zip(fd).enumerate() {
        let err = rel_err(a as f64, f, floor);
        assert!(
            err < tol,
            "{name}[{i}]: analytic {a} vs finite difference {f} (err {err:.3e})"
        );
        worst = worst.max(err);
    }
    worst
}

/// Reference convolution with an explicit float weight matrix laid out
/// out_channels x (in_channels*kh*kw), zero padding.
pub fn naive_conv(x: &FloatTensor, w: &FloatTensor, g: &ConvGeometry) -> FloatTensor {
    let n = x.dim(0);
    let h = x.dim(2);
    let w_in = x.dim(3);
    let (ho, wo) = g.output_hw(h, w_in).unwrap();
    let mut out = FloatTensor::zeros(vec![n, g.out_channels, ho, wo]);
    for img in 0..n {
        for oc in 0..g.out_channels {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0f64;
                    for c in 0..g.in_channels {
                        for ky in 0..g.kernel_h {
                            for kx in 0..g.kernel_w {
                                let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                                let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                                if iy < 0 || iy >= h as isize || ix < 0 || ix >= w_in as isize {
                                    continue;
                                }
                                let xi = ((img * g.in_channels + c) * h + iy as usize) * w_in
                                    + ix as usize;
                                let wi = oc * g.patch_len()
                                    + (c * g.kernel_h + ky) * g.kernel_w
                                    + kx;
                                acc += x.data()[xi] as f64 * w.data()[wi] as f64;
                            }
                        }
                    }
                    let oi = ((img * g.out_channels + oc) * ho + oy) * wo + ox;
                    out.data_mut()[oi] = acc as f32;
                }
            }
        }
    }
    out
}

/// Synthetic glyphs round-tripped through the on-disk tensor container, so
/// every training fixture exercises the parser as well.
pub fn glyph_idx_dataset(classes: &[usize], count: usize, seed: u64) -> Dataset {
    let (pixels, labels) = synth::generate(classes, count, seed).unwrap();
    let side = synth::IMAGE_SIDE;
    let image_bytes = write_idx_u8(&[count, side, side], &pixels).unwrap();
    let label_bytes = write_idx_u8(&[count], &labels).unwrap();
    let images = parse_idx(&image_bytes).unwrap().images().unwrap();
    let labels = parse_idx(&label_bytes).unwrap().labels().unwrap();
    Dataset::new(images, labels, classes.len()).unwrap()
}

/// The overfit fixture: a binary MLP over flattened 28x28 inputs.
pub fn glyph_mlp(classes: usize, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = synth::IMAGE_SIDE;
    Model::new(vec![
        Layer::Flatten(Flatten::new()),
        Layer::BinaryDense(BinaryDense::new(side * side, 256, &mut rng)),
        Layer::BatchNorm(BatchNorm::new(256)),
        Layer::Sign(Sign::new()),
        Layer::Dense(Dense::new(256, classes, &mut rng)),
    ])
}

/// The transfer fixture: two binary conv stages and a binary dense stage,
/// all feeding sign activations, with a float classifier on top. The
/// extractor for the transfer experiments is everything up to that last
/// layer, so its features are already in {-1, +1}.
pub fn glyph_cnn(classes: usize, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c1 = ConvGeometry::new(1, 16, 3, 3, 1, 1).unwrap();
    let c2 = ConvGeometry::new(16, 24, 3, 3, 1, 1).unwrap();
    Model::new(vec![
        Layer::BinaryConv2d(BinaryConv2d::new(c1, &mut rng)),
        Layer::MaxPool2d(MaxPool2d::new(2, 2).unwrap()),
        Layer::BatchNorm(BatchNorm::new(16)),
        Layer::Sign(Sign::new()),
        Layer::BinaryConv2d(BinaryConv2d::new(c2, &mut rng)),
        Layer::MaxPool2d(MaxPool2d::new(2, 2).unwrap()),
        Layer::BatchNorm(BatchNorm::new(24)),
        Layer::Sign(Sign::new()),
        Layer::Flatten(Flatten::new()),
        Layer::BinaryDense(BinaryDense::new(24 * 7 * 7, 192, &mut rng)),
        Layer::BatchNorm(BatchNorm::new(192)),
        Layer::Sign(Sign::new()),
        Layer::Dense(Dense::new(192, classes, &mut rng)),
    ])
}

pub fn adam_config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 32,
        seed,
        optimizer: OptimKind::Adam(AdamParams::default()),
        clip_binary_weights: true,
    }
}

pub fn fit(model: Model, data: &Dataset, epochs: usize, seed: u64) -> Model {
    let mut trainer = Trainer::new(model, adam_config(epochs, seed));
    trainer.run(data, None).unwrap();
    trainer.into_model()
}

pub fn compose(extractor: &Model, head: &Model) -> Model {
    let mut layers = extractor.layers().to_vec();
    layers.extend_from_slice(head.layers());
    Model::new(layers)
}

/// Every binary latent weight stays inside [-1, 1].
pub fn assert_clip_invariant(model: &Model) {
    for layer in model.layers() {
        let weight = match layer {
            Layer::BinaryDense(l) => l.weight(),
            Layer::BinaryConv2d(l) => l.weight(),
            _ => continue,
        };
        for &v in weight.data() {
            assert!(
                (-1.0..=1.0).contains(&v),
                "latent weight {v} escaped [-1, 1]"
            );
        }
    }
}

fn push_bits(out: &mut Vec<u32>, t: &FloatTensor) {
    out.extend(t.data().iter().map(|v| v.to_bits()));
}

/// Bitwise snapshot of every learned tensor, running statistics included.
pub fn state_bits(model: &Model) -> Vec<u32> {
    let mut out = Vec::new();
    for layer in model.layers() {
        match layer {
            Layer::BinaryDense(l) => push_bits(&mut out, l.weight()),
            Layer::BinaryConv2d(l) => push_bits(&mut out, l.weight()),
            Layer::Dense(l) => {
                push_bits(&mut out, l.weight());
                push_bits(&mut out, l.bias());
            }
            Layer::BatchNorm(l) => {
                push_bits(&mut out, l.gamma());
                push_bits(&mut out, l.beta());
                push_bits(&mut out, l.running_mean());
                push_bits(&mut out, l.running_var());
            }
            _ => {}
        }
    }
    out
}

pub fn median3(values: [f64; 3]) -> f64 {
    let mut v = values;
    v.sort_by(f64::total_cmp);
    v[1]
}

/// Random small architectures for serialization round-trips. Even seeds
/// build dense stacks, odd seeds conv stacks; the returned input matches.
pub fn random_model(seed: u64) -> (Model, FloatTensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE ^ seed);
    let classes = rng.gen_range(2..=10);
    let (mut model, input_shape) = if seed % 2 == 0 {
        let d = rng.gen_range(8..=32);
        let hidden = rng.gen_range(16..=48);
        let mut layers = vec![
            Layer::BinaryDense(BinaryDense::new(d, hidden, &mut rng)),
            Layer::BatchNorm(BatchNorm::new(hidden)),
            Layer::Sign(Sign::new()),
        ];
        if rng.gen::<bool>() {
            let h2 = rng.gen_range(8..=24);
            layers.push(Layer::BinaryDense(BinaryDense::new(hidden, h2, &mut rng)));
            layers.push(Layer::BatchNorm(BatchNorm::new(h2)));
            layers.push(Layer::Sign(Sign::new()));
            layers.push(Layer::Dense(Dense::new(h2, classes, &mut rng)));
        } else {
            layers.push(Layer::Dense(Dense::new(hidden, classes, &mut rng)));
        }
        (Model::new(layers), vec![d])
    } else {
        let c = rng.gen_range(1..=3);
        let side = [6, 8, 10][rng.gen_range(0..3)];
        let f = rng.gen_range(4..=8);
        let geom = ConvGeometry::new(c, f, 3, 3, 1, 1).unwrap();
        let flat = f * (side / 2) * (side / 2);
        let layers = vec![
            Layer::BinaryConv2d(BinaryConv2d::new(geom, &mut rng)),
            Layer::MaxPool2d(MaxPool2d::new(2, 2).unwrap()),
            Layer::BatchNorm(BatchNorm::new(f)),
            Layer::Sign(Sign::new()),
            Layer::Flatten(Flatten::new()),
            Layer::Dense(Dense::new(flat, classes, &mut rng)),
        ];
        (Model::new(layers), vec![c, side, side])
    };
    // a warm-up pass moves batch norm statistics off their defaults
    let mut warm_shape = vec![3];
    warm_shape.extend_from_slice(&input_shape);
    let warm = rand_tensor(&warm_shape, &mut rng, -1.5, 1.5);
    model.forward_train(&warm).unwrap();
    let mut in_shape = vec![2];
    in_shape.extend_from_slice(&input_shape);
    let input = rand_tensor(&in_shape, &mut rng, -1.5, 1.5);
    (model, input)
}
