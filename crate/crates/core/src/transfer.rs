//! Frozen-extractor transfer learning: split a trained model, cache the
//! extractor's features, and retrain only a small head on top of them.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::io::model_file::save_model;
use crate::layers::{BinaryDense, Dense, Layer};
use crate::model::Model;
use crate::optim::OptimKind;
use crate::tensor::FloatTensor;
use crate::train::{evaluate, EpochRecord, Metrics, TrainConfig, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn fingerprint(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn fingerprint_hex(fp: &[u8; 32]) -> String {
    fp.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    Binary,
    Float,
}

impl HeadKind {
    pub fn name(&self) -> &'static str {
        match self {
            HeadKind::Binary => "binary",
            HeadKind::Float => "float",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(HeadKind::Binary),
            "float" => Ok(HeadKind::Float),
            other => Err(Error::Config(format!(
                "unknown head kind {other:?}, expected binary or float"
            ))),
        }
    }
}

/// A model cut at a layer boundary: the prefix runs frozen in inference
/// mode, the suffix stays trainable.
#[derive(Clone, Debug)]
pub struct SplitModel {
    extractor: Model,
    head: Model,
}

/// `split_index` counts the layers that become the extractor; at least one
/// layer must remain in the head.
pub fn split_model(model: Model, split_index: usize) -> Result<SplitModel> {
    if model.is_empty() {
        return Err(Error::shape("cannot split an empty model".to_string()));
    }
    if split_index >= model.len() {
        return Err(Error::shape(format!(
            "split index {split_index} leaves no head in a {} layer model",
            model.len()
        )));
    }
    let mut layers = model.into_layers();
    let head = layers.split_off(split_index);
    Ok(SplitModel {
        extractor: Model::new(layers),
        head: Model::new(head),
    })
}

impl SplitModel {
    pub fn from_parts(extractor: Model, head: Model) -> Self {
        Self { extractor, head }
    }

    pub fn extractor(&self) -> &Model {
        &self.extractor
    }

    pub fn head(&self) -> &Model {
        &self.head
    }

    pub fn into_parts(self) -> (Model, Model) {
        (self.extractor, self.head)
    }

    /// Replaces the head; the extractor is untouchable by design.
    pub fn with_head(mut self, head: Model) -> Self {
        self.head = head;
        self
    }

    pub fn forward_infer(&self, x: &FloatTensor) -> Result<FloatTensor> {
        self.head.forward_infer(&self.extractor.forward_infer(x)?)
    }

    pub fn extractor_fingerprint(&self) -> Result<[u8; 32]> {
        Ok(fingerprint(&save_model(&self.extractor)?))
    }
}

/// Extractor outputs for a whole dataset, tied to the exact extractor that
/// produced them by a hash of its serialized form.
#[derive(Clone, Debug)]
pub struct FeatureCache {
    features: FloatTensor, // samples×dim
    labels: Vec<u32>,
    num_classes: usize,
    fingerprint: [u8; 32],
}

impl FeatureCache {
    pub fn new(
        features: FloatTensor,
        labels: Vec<u32>,
        num_classes: usize,
        fingerprint: [u8; 32],
    ) -> Result<Self> {
        let [n, _] = features.dims2()?;
        if labels.len() != n {
            return Err(Error::shape(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::shape(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            fingerprint,
        })
    }

    pub fn features(&self) -> &FloatTensor {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.dim(1)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    pub fn to_dataset(&self) -> Result<Dataset> {
        Dataset::from_rows(&self.features, self.labels.clone(), self.num_classes)
    }
}

/// Runs the frozen extractor over the whole dataset with evaluation
/// preprocessing (center crops) and records its fingerprint.
pub fn extract_features(extractor: &Model, data: &Dataset, batch_size: usize) -> Result<FeatureCache> {
    if data.is_empty() {
        return Err(Error::Config("cannot extract features from an empty dataset".to_string()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".to_string()));
    }
    let fp = fingerprint(&save_model(extractor)?);
    let idxs: Vec<usize> = (0..data.len()).collect();
    let mut rows: Vec<f32> = Vec::new();
    let mut dim = None;
    for chunk in idxs.chunks(batch_size) {
        let (x, _) = data.batch_eval(chunk)?;
        let y = extractor.forward_infer(&x)?;
        let flat = match y.rank() {
            2 => y,
            4 => {
                let n = y.dim(0);
                let d = y.numel() / n;
                y.reshape(vec![n, d])?
            }
            r => {
                return Err(Error::shape(format!(
                    "extractor produced rank-{r} features; expected 2 or 4"
                )))
            }
        };
        let d = flat.dim(1);
        if *dim.get_or_insert(d) != d {
            return Err(Error::shape("feature width changed between batches".to_string()));
        }
        rows.extend_from_slice(flat.data());
    }
    let d = dim.unwrap();
    FeatureCache::new(
        FloatTensor::new(vec![data.len(), d], rows)?,
        data.labels().to_vec(),
        data.num_classes(),
        fp,
    )
}

fn check_fingerprint(split: &SplitModel, cache: &FeatureCache) -> Result<()> {
    let expected = split.extractor_fingerprint()?;
    if &expected != cache.fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: fingerprint_hex(&expected),
            got: fingerprint_hex(cache.fingerprint()),
        });
    }
    Ok(())
}

#[derive(Debug)]
pub struct RetrainOutcome {
    pub head: Model,
    pub records: Vec<EpochRecord>,
    pub final_metrics: Metrics,
}

/// Builds a fresh single-layer head over the cached features and trains
/// it. A binary head is a BinaryDense over ±1 features and requires Adam;
/// a float head is a plain Dense.
pub fn retrain_head(
    split: &SplitModel,
    cache: &FeatureCache,
    kind: HeadKind,
    config: &TrainConfig,
    val: Option<&FeatureCache>,
) -> Result<RetrainOutcome> {
    check_fingerprint(split, cache)?;
    if let Some(v) = val {
        check_fingerprint(split, v)?;
    }
    if kind == HeadKind::Binary && matches!(config.optimizer, OptimKind::Sgd(_)) {
        return Err(Error::Config(
            "a binary head trains with Adam, not SGD".to_string(),
        ));
    }
    let dim = cache.feature_dim();
    let classes = cache.num_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let head = match kind {
        HeadKind::Binary => Model::new(vec![Layer::BinaryDense(BinaryDense::new(
            dim, classes, &mut rng,
        ))]),
        HeadKind::Float => Model::new(vec![Layer::Dense(Dense::new(dim, classes, &mut rng))]),
    };
    let train_set = cache.to_dataset()?;
    let val_set = val.map(|v| v.to_dataset()).transpose()?;
    let mut trainer = Trainer::new(head, *config);
    let records = trainer.run(&train_set, val_set.as_ref())?;
    let head = trainer.into_model();
    let final_metrics = evaluate(&head, val_set.as_ref().unwrap_or(&train_set), config.batch_size)?;
    Ok(RetrainOutcome {
        head,
        records,
        final_metrics,
    })
}
