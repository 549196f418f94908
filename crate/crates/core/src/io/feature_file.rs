//! The .bnnf feature-cache container: extracted features plus the
//! fingerprint of the extractor that produced them, so a retraining run
//! can refuse features from the wrong (or a modified) extractor.
//!
//! Layout, all little endian after the magic:
//!   "BNNF"  magic
//!   u16     format version (currently 1)
//!   32 B    extractor sha-256
//!   u32     classes
//!   u32     rows
//!   u32     feature dim
//!   rows  x u32  labels
//!   rows*dim x f32  features, row major

use super::bytes::{push_f32_le, push_u16_le, push_u32_le, Reader};
use crate::error::{Error, Result};
use crate::tensor::FloatTensor;
use crate::transfer::FeatureCache;

const FORMAT: &str = "bnnf";
const MAGIC: &[u8; 4] = b"BNNF";
pub const FEATURE_FORMAT_VERSION: u16 = 1;

pub fn write_feature_cache(cache: &FeatureCache) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_u16_le(&mut out, FEATURE_FORMAT_VERSION);
    out.extend_from_slice(cache.fingerprint());
    push_u32_le(&mut out, cache.num_classes() as u32);
    push_u32_le(&mut out, cache.len() as u32);
    push_u32_le(&mut out, cache.feature_dim() as u32);
    for &l in cache.labels() {
        push_u32_le(&mut out, l);
    }
    for &v in cache.features().data() {
        push_f32_le(&mut out, v);
    }
    out
}

pub fn read_feature_cache(bytes: &[u8]) -> Result<FeatureCache> {
    let mut r = Reader::new(bytes, FORMAT);
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::BadMagic { format: FORMAT });
    }
    let version = r.u16_le("version")?;
    if version != FEATURE_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            format: FORMAT,
            version,
        });
    }
    let mut fingerprint = [0u8; 32];
    fingerprint.copy_from_slice(r.take(32, "fingerprint")?);
    let classes = r.u32_le("classes")? as usize;
    let rows = r.u32_le("rows")? as usize;
    let dim = r.u32_le("feature dim")? as usize;
    if classes == 0 {
        return Err(r.malformed("zero classes"));
    }
    if dim == 0 {
        return Err(r.malformed("zero feature dim"));
    }
    let labels = r.u32s(rows, "labels")?;
    let count = rows
        .checked_mul(dim)
        .ok_or_else(|| r.malformed("feature count overflows"))?;
    let features = r.f32s(count, "features")?;
    r.expect_end()?;
    let features = FloatTensor::new(vec![rows, dim], features)?;
    FeatureCache::new(features, labels, classes, fingerprint)
}
