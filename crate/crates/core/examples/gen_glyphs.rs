//! Writes a synthetic glyph dataset as an IDX image/label pair, ready for
//! the command line tools:
//!
//!   cargo run --example gen_glyphs -- /tmp/train 4000 1
//!   cargo run --example gen_glyphs -- /tmp/test 1000 2
//!   bnnx pretrain --images /tmp/train-images.idx --labels /tmp/train-labels.idx ...

use bnnx::io::write_idx_u8;
use bnnx::synth;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let usage = "usage: gen_glyphs OUT_STEM COUNT SEED [CLASSES]";
    let mut args = std::env::args().skip(1);
    let stem = args.next().ok_or(usage)?;
    let count: usize = args.next().ok_or(usage)?.parse()?;
    let seed: u64 = args.next().ok_or(usage)?.parse()?;
    let classes: usize = match args.next() {
        Some(c) => c.parse()?,
        None => synth::GLYPH_CLASSES,
    };
    let class_list: Vec<usize> = (0..classes).collect();
    let (pixels, labels) = synth::generate(&class_list, count, seed)?;
    let side = synth::IMAGE_SIDE;
    std::fs::write(
        format!("{stem}-images.idx"),
        write_idx_u8(&[count, side, side], &pixels)?,
    )?;
    std::fs::write(format!("{stem}-labels.idx"), write_idx_u8(&[count], &labels)?)?;
    println!("wrote {count} {side}x{side} glyphs over {classes} classes to {stem}-{{images,labels}}.idx");
    Ok(())
}
