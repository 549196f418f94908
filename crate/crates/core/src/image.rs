//! Bilinear resizing and square crops for C×H×W images.

use crate::error::{Error, Result};
use crate::tensor::FloatTensor;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResizeMode {
    /// Longest side lands on the target (can leave the short side under
    /// the crop size; dataset preprocessing then upscales minimally).
    Longest,
    /// Shortest side lands on the target.
    Shortest,
}

#[derive(Clone, Copy, Debug)]
pub struct PreprocessConfig {
    pub resize_to: usize,
    pub crop: usize,
    pub train_mode: bool,
    pub resize_mode: ResizeMode,
}

impl PreprocessConfig {
    pub fn new(resize_to: usize, crop: usize) -> Result<Self> {
        if crop == 0 || resize_to == 0 || crop > resize_to {
            return Err(Error::Config(format!(
                "crop {crop} must be positive and no larger than resize target {resize_to}"
            )));
        }
        Ok(Self {
            resize_to,
            crop,
            train_mode: true,
            resize_mode: ResizeMode::Longest,
        })
    }

    pub fn eval_only(mut self) -> Self {
        self.train_mode = false;
        self
    }

    pub fn with_resize_mode(mut self, mode: ResizeMode) -> Self {
        self.resize_mode = mode;
        self
    }
}

/// Bilinear resampling with half-pixel centers. The lerp is written as
/// v0 + f·(v1 − v0) so constant images survive bit-exactly and an
/// identity-size resize returns the input values unchanged.
pub fn resize_bilinear(img: &FloatTensor, out_h: usize, out_w: usize) -> Result<FloatTensor> {
    let [c, h, w] = dims3(img)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::shape("resize target must be positive".to_string()));
    }
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let mut coords_x = Vec::with_capacity(out_w);
    for ox in 0..out_w {
        coords_x.push(source_coord(ox, sx, w));
    }
    let mut out = vec![0.0f32; c * out_h * out_w];
    let data = img.data();
    for ch in 0..c {
        let plane = ch * h * w;
        for oy in 0..out_h {
            let (y0, y1, fy) = source_coord(oy, sy, h);
            for (ox, &(x0, x1, fx)) in coords_x.iter().enumerate() {
                let top = {
                    let a = data[plane + y0 * w + x0];
                    let b = data[plane + y0 * w + x1];
                    a + fx * (b - a)
                };
                let bot = {
                    let a = data[plane + y1 * w + x0];
                    let b = data[plane + y1 * w + x1];
                    a + fx * (b - a)
                };
                out[(ch * out_h + oy) * out_w + ox] = top + fy * (bot - top);
            }
        }
    }
    Ok(FloatTensor::from_parts(vec![c, out_h, out_w], out))
}

fn source_coord(dst: usize, scale: f64, extent: usize) -> (usize, usize, f32) {
    let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (extent - 1) as f64);
    let lo = src.floor() as usize;
    let hi = (lo + 1).min(extent - 1);
    (lo, hi, (src - lo as f64) as f32)
}

fn dims3(img: &FloatTensor) -> Result<[usize; 3]> {
    match img.shape() {
        [c, h, w] => Ok([*c, *h, *w]),
        other => Err(Error::shape(format!("expected C×H×W image, got {other:?}"))),
    }
}

/// Scales so the longest side equals `target`; the other side is rounded
/// to the nearest integer, never below 1.
pub fn resize_longest(img: &FloatTensor, target: usize) -> Result<FloatTensor> {
    let [_, h, w] = dims3(img)?;
    let (out_h, out_w) = if h >= w {
        (target, scaled_side(w, h, target))
    } else {
        (scaled_side(h, w, target), target)
    };
    resize_bilinear(img, out_h, out_w)
}

/// Scales so the shortest side equals `target`.
pub fn resize_shortest(img: &FloatTensor, target: usize) -> Result<FloatTensor> {
    let [_, h, w] = dims3(img)?;
    let (out_h, out_w) = if h <= w {
        (target, scaled_side(w, h, target))
    } else {
        (scaled_side(h, w, target), target)
    };
    resize_bilinear(img, out_h, out_w)
}

fn scaled_side(side: usize, anchor: usize, target: usize) -> usize {
    ((side as f64 * target as f64 / anchor as f64).round() as usize).max(1)
}

pub fn crop_center(img: &FloatTensor, size: usize) -> Result<FloatTensor> {
    let [_, h, w] = dims3(img)?;
    check_crop(h, w, size)?;
    crop_at(img, (h - size) / 2, (w - size) / 2, size)
}

pub fn crop_random(img: &FloatTensor, size: usize, rng: &mut impl Rng) -> Result<FloatTensor> {
    let [_, h, w] = dims3(img)?;
    check_crop(h, w, size)?;
    let oy = rng.gen_range(0..=h - size);
    let ox = rng.gen_range(0..=w - size);
    crop_at(img, oy, ox, size)
}

fn check_crop(h: usize, w: usize, size: usize) -> Result<()> {
    if size == 0 || h < size || w < size {
        return Err(Error::shape(format!(
            "cannot take a {size}x{size} crop from a {h}x{w} image"
        )));
    }
    Ok(())
}

fn crop_at(img: &FloatTensor, oy: usize, ox: usize, size: usize) -> Result<FloatTensor> {
    let [c, h, w] = dims3(img)?;
    debug_assert!(oy + size <= h && ox + size <= w);
    let mut out = vec![0.0f32; c * size * size];
    let data = img.data();
    for ch in 0..c {
        for y in 0..size {
            let src = (ch * h + oy + y) * w + ox;
            let dst = (ch * size + y) * size;
            out[dst..dst + size].copy_from_slice(&data[src..src + size]);
        }
    }
    Ok(FloatTensor::from_parts(vec![c, size, size], out))
}

/// Resize per the config, then upscale minimally if the crop no longer
/// fits (the longest-side rule can undersize the short side). Returns the
/// resized image and whether the fallback fired.
pub fn resize_for_crop(img: &FloatTensor, cfg: &PreprocessConfig) -> Result<(FloatTensor, bool)> {
    let resized = match cfg.resize_mode {
        ResizeMode::Longest => resize_longest(img, cfg.resize_to)?,
        ResizeMode::Shortest => resize_shortest(img, cfg.resize_to)?,
    };
    let [_, h, w] = dims3(&resized)?;
    let short = h.min(w);
    if short >= cfg.crop {
        return Ok((resized, false));
    }
    let s = cfg.crop as f64 / short as f64;
    let nh = ((h as f64 * s).round() as usize).max(cfg.crop);
    let nw = ((w as f64 * s).round() as usize).max(cfg.crop);
    Ok((resize_bilinear(&resized, nh, nw)?, true))
}
