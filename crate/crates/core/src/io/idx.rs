//! IDX tensor container (the MNIST family format): big-endian extents,
//! tightly packed payload.

use super::bytes::Reader;
use crate::error::{Error, Result};
use crate::tensor::FloatTensor;

const FORMAT: &str = "idx";
const TYPE_U8: u8 = 0x08;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxDataset {
    type_code: u8,
    dims: Vec<usize>,
    payload: Vec<u8>,
}

/// Parses a full IDX byte stream. Only the unsigned-byte element type is
/// supported; the other standard codes are rejected as unknown tags.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxDataset> {
    let mut r = Reader::new(bytes, FORMAT);
    let magic = r.take(4, "magic")?;
    if magic[0] != 0 || magic[1] != 0 {
        return Err(Error::BadMagic { format: FORMAT });
    }
    let type_code = magic[2];
    if type_code != TYPE_U8 {
        return Err(Error::UnknownTag {
            format: FORMAT,
            tag: type_code,
        });
    }
    let ndim = magic[3] as usize;
    if ndim == 0 {
        return Err(r.malformed("zero dimensions"));
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut total = 1usize;
    for i in 0..ndim {
        let d = r.u32_be(&format!("dim {i}"))? as usize;
        if d == 0 {
            return Err(r.malformed(format!("dim {i} is zero")));
        }
        total = total
            .checked_mul(d)
            .ok_or_else(|| r.malformed("element count overflows"))?;
        dims.push(d);
    }
    let payload = r.take(total, "payload")?.to_vec();
    r.expect_end()?;
    Ok(IdxDataset {
        type_code,
        dims,
        payload,
    })
}

/// Serializes u8 data as IDX; the inverse of `parse_idx` for type 0x08.
pub fn write_idx_u8(dims: &[usize], payload: &[u8]) -> Result<Vec<u8>> {
    let total: usize = dims.iter().product();
    if dims.is_empty() || total != payload.len() || dims.len() > 255 {
        return Err(Error::shape(format!(
            "idx dims {dims:?} do not describe {} payload bytes",
            payload.len()
        )));
    }
    let mut out = vec![0, 0, TYPE_U8, dims.len() as u8];
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(payload);
    Ok(out)
}

impl IdxDataset {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Whole container as one tensor, bytes scaled to [0,1].
    pub fn to_tensor(&self) -> Result<FloatTensor> {
        FloatTensor::new(
            self.dims.clone(),
            self.payload.iter().map(|&b| b as f32 / 255.0).collect(),
        )
    }

    /// Splits the leading axis into per-sample image tensors:
    /// N×H×W becomes N single-channel C×H×W images, N×C×H×W passes the
    /// channel axis through, N×D yields flat vectors.
    pub fn images(&self) -> Result<Vec<FloatTensor>> {
        let sample_shape: Vec<usize> = match self.dims.as_slice() {
            [_, h, w] => vec![1, *h, *w],
            [_, c, h, w] => vec![*c, *h, *w],
            [_, d] => vec![*d],
            other => {
                return Err(Error::shape(format!(
                    "cannot slice idx of shape {other:?} into samples"
                )))
            }
        };
        let n = self.dims[0];
        let stride: usize = sample_shape.iter().product();
        (0..n)
            .map(|i| {
                FloatTensor::new(
                    sample_shape.clone(),
                    self.payload[i * stride..(i + 1) * stride]
                        .iter()
                        .map(|&b| b as f32 / 255.0)
                        .collect(),
                )
            })
            .collect()
    }

    /// Rank-1 container interpreted as class labels.
    pub fn labels(&self) -> Result<Vec<u32>> {
        if self.dims.len() != 1 {
            return Err(Error::shape(format!(
                "labels must be rank 1, got {:?}",
                self.dims
            )));
        }
        Ok(self.payload.iter().map(|&b| b as u32).collect())
    }
}
