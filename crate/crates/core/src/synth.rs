//! Deterministic synthetic glyph dataset: 28×28 grayscale renderings of
//! ten segment-built glyphs with random shifts, stroke dropout, intensity
//! wobble, and background noise. All classes share one stroke vocabulary,
//! so features learned on a subset of classes transfer to the rest.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::FloatTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const IMAGE_SIDE: usize = 28;
pub const GLYPH_CLASSES: usize = 10;

/// Strokes on a 20×20 glyph box: seven-segment bars plus one diagonal.
const SEG_A: (i32, i32, i32, i32) = (3, 3, 16, 3); // top
const SEG_B: (i32, i32, i32, i32) = (16, 3, 16, 10); // upper right
const SEG_C: (i32, i32, i32, i32) = (16, 10, 16, 17); // lower right
const SEG_D: (i32, i32, i32, i32) = (3, 17, 16, 17); // bottom
const SEG_E: (i32, i32, i32, i32) = (3, 10, 3, 17); // lower left
const SEG_F: (i32, i32, i32, i32) = (3, 3, 3, 10); // upper left
const SEG_G: (i32, i32, i32, i32) = (3, 10, 16, 10); // middle
const SEG_SLASH: (i32, i32, i32, i32) = (16, 3, 8, 17);

fn glyph_segments(class: usize) -> &'static [(i32, i32, i32, i32)] {
    match class {
        0 => &[SEG_A, SEG_B, SEG_C, SEG_D, SEG_E, SEG_F],
        1 => &[SEG_B, SEG_C],
        2 => &[SEG_A, SEG_B, SEG_G, SEG_E, SEG_D],
        3 => &[SEG_A, SEG_B, SEG_G, SEG_C, SEG_D],
        4 => &[SEG_F, SEG_G, SEG_B, SEG_C],
        5 => &[SEG_A, SEG_F, SEG_G, SEG_C, SEG_D],
        6 => &[SEG_A, SEG_F, SEG_G, SEG_E, SEG_C, SEG_D],
        7 => &[SEG_A, SEG_SLASH],
        8 => &[SEG_A, SEG_B, SEG_C, SEG_D, SEG_E, SEG_F, SEG_G],
        9 => &[SEG_A, SEG_B, SEG_C, SEG_D, SEG_F, SEG_G],
        _ => unreachable!("class must be < {GLYPH_CLASSES}"),
    }
}

fn draw_segment(canvas: &mut [bool], seg: (i32, i32, i32, i32), dx: i32, dy: i32) {
    let (x0, y0, x1, y1) = seg;
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1) * 2;
    for t in 0..=steps {
        let x = x0 + (x1 - x0) * t / steps + dx;
        let y = y0 + (y1 - y0) * t / steps + dy;
        // 2×2 brush
        for (px, py) in [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)] {
            if (0..IMAGE_SIDE as i32).contains(&px) && (0..IMAGE_SIDE as i32).contains(&py) {
                canvas[py as usize * IMAGE_SIDE + px as usize] = true;
            }
        }
    }
}

/// One 28×28 u8 rendering of the given glyph class.
pub fn render_glyph(class: usize, rng: &mut impl Rng) -> Vec<u8> {
    assert!(class < GLYPH_CLASSES, "class must be < {GLYPH_CLASSES}");
    let mut stroke = vec![false; IMAGE_SIDE * IMAGE_SIDE];
    // the 20×20 glyph box sits at offset 4 and wanders by up to ±3
    let dx = 4 + rng.gen_range(-3..=3);
    let dy = 4 + rng.gen_range(-3..=3);
    for &seg in glyph_segments(class) {
        draw_segment(&mut stroke, seg, dx, dy);
    }
    let ink: u8 = rng.gen_range(190..=255);
    stroke
        .iter()
        .map(|&on| {
            if on && rng.gen::<f32>() >= 0.08 {
                ink.saturating_sub(rng.gen_range(0..35))
            } else {
                rng.gen_range(0..25)
            }
        })
        .collect()
}

/// `count` images cycling round-robin through `classes`; the label of a
/// sample is its class's position in the slice, so any subset yields
/// contiguous labels starting at 0.
pub fn generate(classes: &[usize], count: usize, seed: u64) -> Result<(Vec<u8>, Vec<u8>)> {
    if classes.is_empty() || count == 0 {
        return Err(Error::Config("need at least one class and one sample".to_string()));
    }
    if classes.len() > 255 {
        return Err(Error::Config("more than 255 classes do not fit u8 labels".to_string()));
    }
    if let Some(&bad) = classes.iter().find(|&&c| c >= GLYPH_CLASSES) {
        return Err(Error::Config(format!(
            "glyph class {bad} out of range 0..{GLYPH_CLASSES}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(count * IMAGE_SIDE * IMAGE_SIDE);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % classes.len();
        images.extend_from_slice(&render_glyph(classes[label], &mut rng));
        labels.push(label as u8);
    }
    Ok((images, labels))
}

/// Same data as an in-memory Dataset of 1×28×28 samples scaled to [0,1].
pub fn generate_dataset(classes: &[usize], count: usize, seed: u64) -> Result<Dataset> {
    let (images, labels) = generate(classes, count, seed)?;
    let stride = IMAGE_SIDE * IMAGE_SIDE;
    let samples = images
        .chunks_exact(stride)
        .map(|px| {
            FloatTensor::new(
                vec![1, IMAGE_SIDE, IMAGE_SIDE],
                px.iter().map(|&b| b as f32 / 255.0).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, labels.iter().map(|&l| l as u32).collect(), classes.len())
}
