//! Binary netpbm images: P5 grayscale and P6 RGB, 8-bit only.

use crate::error::{Error, Result};
use crate::tensor::FloatTensor;

const FORMAT: &str = "pnm";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PnmImage {
    channels: usize, // 1 for P5, 3 for P6
    width: usize,
    height: usize,
    pixels: Vec<u8>, // interleaved row-major
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::Malformed {
        format: FORMAT,
        msg: msg.into(),
    }
}

/// Reads one ASCII header token, skipping whitespace and # comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Truncated {
            format: FORMAT,
            detail: "header ended early".to_string(),
        });
    }
    String::from_utf8(bytes[start..*pos].to_vec()).map_err(|_| malformed("non-ascii header token"))
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = next_token(bytes, pos)?;
    tok.parse::<usize>()
        .map_err(|_| malformed(format!("{what} is not a number: {tok:?}")))
}

pub fn parse_pnm(bytes: &[u8]) -> Result<PnmImage> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos).map_err(|_| Error::BadMagic { format: FORMAT })?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        m if m.len() == 2 && m.starts_with('P') => {
            return Err(Error::UnknownTag {
                format: FORMAT,
                tag: m.as_bytes()[1],
            })
        }
        _ => return Err(Error::BadMagic { format: FORMAT }),
    };
    let width = header_number(bytes, &mut pos, "width")?;
    let height = header_number(bytes, &mut pos, "height")?;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(malformed(format!("degenerate size {width}x{height}")));
    }
    if maxval != 255 {
        return Err(malformed(format!("maxval {maxval} unsupported, need 255")));
    }
    // exactly one whitespace byte separates the header from raw pixels
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(malformed("missing separator after maxval"));
    }
    pos += 1;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| malformed("pixel count overflows"))?;
    let have = bytes.len() - pos;
    if have < need {
        return Err(Error::Truncated {
            format: FORMAT,
            detail: format!("pixels: need {need} bytes, have {have}"),
        });
    }
    if have > need {
        return Err(malformed(format!("{} trailing bytes", have - need)));
    }
    Ok(PnmImage {
        channels,
        width,
        height,
        pixels: bytes[pos..].to_vec(),
    })
}

pub fn write_pnm(img: &PnmImage) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

impl PnmImage {
    pub fn new(channels: usize, width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::shape(format!("pnm supports 1 or 3 channels, got {channels}")));
        }
        if pixels.len() != channels * width * height {
            return Err(Error::shape(format!(
                "{} pixel bytes for {channels}x{height}x{width}",
                pixels.len()
            )));
        }
        Ok(Self {
            channels,
            width,
            height,
            pixels,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// C×H×W tensor in [0,1]; P6 pixels are de-interleaved into planes.
    pub fn to_tensor(&self) -> Result<FloatTensor> {
        let (c, h, w) = (self.channels, self.height, self.width);
        let mut data = vec![0.0f32; c * h * w];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    data[(ch * h + y) * w + x] =
                        self.pixels[(y * w + x) * c + ch] as f32 / 255.0;
                }
            }
        }
        FloatTensor::new(vec![c, h, w], data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_gray_image() {
        let img = parse_pnm(b"P5 2 2 255\n\x00\x40\x80\xFF").unwrap();
        assert_eq!((img.channels(), img.width(), img.height()), (1, 2, 2));
        let t = img.to_tensor().unwrap();
        assert_eq!(t.shape(), &[1, 2, 2]);
        assert_eq!(t.data()[3], 1.0);
    }

    #[test]
    fn skips_header_comments() {
        let img = parse_pnm(b"P5\n# made by hand\n2 1\n# another\n255\n\x01\x02").unwrap();
        assert_eq!(img.pixels(), &[1, 2]);
    }

    #[test]
    fn rgb_roundtrip() {
        let pixels: Vec<u8> = (0..2 * 3 * 3).map(|i| i as u8 * 10).collect();
        let img = PnmImage::new(3, 3, 2, pixels).unwrap();
        let parsed = parse_pnm(&write_pnm(&img)).unwrap();
        assert_eq!(parsed, img);
        // plane de-interleave: red plane first
        let t = parsed.to_tensor().unwrap();
        assert_eq!(t.shape(), &[3, 2, 3]);
        assert_eq!(t.data()[0], 0.0);
        assert_eq!(t.data()[1], 30.0 / 255.0);
    }

    #[test]
    fn rejects_wrong_variants() {
        assert!(matches!(
            parse_pnm(b"P3 1 1 255\n0 0 0"),
            Err(Error::UnknownTag { tag: b'3', .. })
        ));
        assert!(matches!(parse_pnm(b"JFIF"), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn rejects_wrong_maxval() {
        assert!(matches!(
            parse_pnm(b"P5 1 1 65535\n\x00\x00"),
            Err(Error::Malformed { .. })
        ));
    }

    #[test]
    fn rejects_truncated_pixels() {
        assert!(matches!(
            parse_pnm(b"P6 2 2 255\n\x01\x02\x03"),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn rejects_trailing_garbage() {
        assert!(matches!(
            parse_pnm(b"P5 1 1 255\n\x01\x02"),
            Err(Error::Malformed { .. })
        ));
    }
}
