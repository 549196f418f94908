//! Extractor bundles: a frozen-extractor .bnnx blob plus a small text
//! manifest describing the head interface, tied together by a sha-256
//! fingerprint. This is the ship-only-the-last-layer artifact: the blob is
//! immutable, heads come and go.

use super::model_file::{load_model, save_model};
use crate::error::{Error, Result};
use crate::layers::Layer;
use crate::model::Model;
use crate::transfer::{fingerprint, fingerprint_hex, HeadKind, SplitModel};
use std::path::{Path, PathBuf};

const FORMAT: &str = "manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct ExtractorBundle {
    pub blob: Vec<u8>,
    pub fingerprint: [u8; 32],
    pub feature_dim: usize,
    pub num_classes: usize,
    pub head_kind: HeadKind,
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::Malformed {
        format: FORMAT,
        msg: msg.into(),
    }
}

/// Head interface implied by the head's first projection layer.
fn head_interface(head: &Model) -> Result<(usize, usize, HeadKind)> {
    if head.is_empty() {
        return Err(malformed("cannot export a split with an empty head"));
    }
    for layer in head.layers() {
        match layer {
            Layer::BinaryDense(l) => return Ok((l.in_dim(), l.out_dim(), HeadKind::Binary)),
            Layer::Dense(l) => return Ok((l.in_dim(), l.out_dim(), HeadKind::Float)),
            _ => continue,
        }
    }
    Err(malformed("head has no dense layer to describe"))
}

/// Serializes the frozen extractor, optionally folding batch norms into
/// shift norms first.
pub fn export_extractor(split: &SplitModel, fold_shifts: bool) -> Result<ExtractorBundle> {
    let (feature_dim, num_classes, head_kind) = head_interface(split.head())?;
    let extractor = if fold_shifts {
        split.extractor().fold_shift_norms()?
    } else {
        split.extractor().clone()
    };
    let blob = save_model(&extractor)?;
    let fp = fingerprint(&blob);
    Ok(ExtractorBundle {
        blob,
        fingerprint: fp,
        feature_dim,
        num_classes,
        head_kind,
    })
}

impl ExtractorBundle {
    pub fn manifest(&self) -> String {
        format!(
            "bnnx-manifest: {MANIFEST_VERSION}\n\
             extractor-sha256: {}\n\
             feature-dim: {}\n\
             classes: {}\n\
             head-kind: {}\n",
            fingerprint_hex(&self.fingerprint),
            self.feature_dim,
            self.num_classes,
            self.head_kind.name()
        )
    }

    pub fn load_extractor(&self) -> Result<Model> {
        load_model(&self.blob)
    }

    /// `stem.bnnx` and `stem.manifest` next to each other.
    pub fn write_to(&self, stem: &Path) -> Result<(PathBuf, PathBuf)> {
        let blob_path = stem.with_extension("bnnx");
        let manifest_path = stem.with_extension("manifest");
        std::fs::write(&blob_path, &self.blob)?;
        std::fs::write(&manifest_path, self.manifest())?;
        Ok((blob_path, manifest_path))
    }
}

fn parse_manifest(text: &str) -> Result<(String, usize, usize, HeadKind)> {
    let mut version = None;
    let mut sha = None;
    let mut dim = None;
    let mut classes = None;
    let mut kind = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| malformed(format!("line {} has no key", lineno + 1)))?;
        let value = value.trim();
        let number = |what: &str| {
            value
                .parse::<usize>()
                .map_err(|_| malformed(format!("{what} is not a number: {value:?}")))
        };
        match key.trim() {
            "bnnx-manifest" => version = Some(number("manifest version")?),
            "extractor-sha256" => sha = Some(value.to_string()),
            "feature-dim" => dim = Some(number("feature-dim")?),
            "classes" => classes = Some(number("classes")?),
            "head-kind" => kind = Some(HeadKind::parse(value)?),
            _ => continue, // unknown keys are forward-compatible
        }
    }
    match version {
        Some(v) if v as u32 == MANIFEST_VERSION => {}
        Some(v) => {
            return Err(Error::UnsupportedVersion {
                format: FORMAT,
                version: v.min(u16::MAX as usize) as u16,
            })
        }
        None => return Err(malformed("missing bnnx-manifest version line")),
    }
    Ok((
        sha.ok_or_else(|| malformed("missing extractor-sha256"))?,
        dim.ok_or_else(|| malformed("missing feature-dim"))?,
        classes.ok_or_else(|| malformed("missing classes"))?,
        kind.ok_or_else(|| malformed("missing head-kind"))?,
    ))
}

/// Reads `stem.bnnx` + `stem.manifest` and verifies the blob hash against
/// the manifest before anything else touches the bytes.
pub fn load_bundle(stem: &Path) -> Result<ExtractorBundle> {
    let blob = std::fs::read(stem.with_extension("bnnx"))?;
    let text = std::fs::read_to_string(stem.with_extension("manifest"))?;
    let (sha, feature_dim, num_classes, head_kind) = parse_manifest(&text)?;
    let fp = fingerprint(&blob);
    let got = fingerprint_hex(&fp);
    if got != sha {
        return Err(Error::FingerprintMismatch { expected: sha, got });
    }
    Ok(ExtractorBundle {
        blob,
        fingerprint: fp,
        feature_dim,
        num_classes,
        head_kind,
    })
}
