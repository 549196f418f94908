//! The training loop, evaluation pass, and top-k metrics. A run is a pure
//! function of (model init, data, config): shuffling and random crops both
//! draw from a per-epoch rng reseeded as seed+epoch.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::softmax_cross_entropy;
use crate::model::Model;
use crate::optim::{OptimKind, Optimizer};
use crate::tensor::FloatTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimKind,
    pub clip_binary_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            seed: 0,
            optimizer: OptimKind::Adam(Default::default()),
            clip_binary_weights: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub loss: f64,
    pub top1: f64,
    pub top5: f64,
}

/// One CSV row of a training run.
#[derive(Clone, Copy, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_top1: f64,
    pub val_top1: f64,
    pub val_top5: f64,
}

/// The rng stream every epoch-level random choice draws from.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(epoch as u64))
}

/// Fisher-Yates permutation of 0..n.
pub fn shuffled_indices(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        idx.swap(i, rng.gen_range(0..=i));
    }
    idx
}

/// Fraction of rows whose label ranks among the k largest logits. A class
/// ranks ahead of the label only if its logit is strictly larger, or equal
/// with a lower index; that makes ties deterministic.
pub fn topk_accuracy(logits: &FloatTensor, labels: &[u32], k: usize) -> Result<f64> {
    let [batch, classes] = logits.dims2()?;
    if labels.len() != batch {
        return Err(Error::shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if k == 0 || k > classes {
        return Err(Error::Config(format!(
            "k={k} out of range for {classes} classes"
        )));
    }
    let mut hits = 0usize;
    for (row, &label) in labels.iter().enumerate() {
        let label = label as usize;
        if label >= classes {
            return Err(Error::shape(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let xs = &logits.data()[row * classes..(row + 1) * classes];
        let target = xs[label];
        let ahead = xs
            .iter()
            .enumerate()
            .filter(|&(c, &v)| v > target || (v == target && c < label))
            .count();
        if ahead < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / batch as f64)
}

/// Full-set inference metrics. Never mutates the model; batches walk the
/// dataset in index order with center-crop preprocessing.
pub fn evaluate(model: &Model, data: &Dataset, batch_size: usize) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::Config("cannot evaluate an empty dataset".to_string()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".to_string()));
    }
    let idxs: Vec<usize> = (0..data.len()).collect();
    let mut loss_sum = 0.0f64;
    let mut top1_sum = 0.0f64;
    let mut top5_sum = 0.0f64;
    let mut k5 = None;
    for chunk in idxs.chunks(batch_size) {
        let (x, labels) = data.batch_eval(chunk)?;
        let logits = model.forward_infer(&x)?;
        let classes = logits.dim(1);
        let k = *k5.get_or_insert(classes.min(5));
        let (loss, _) = softmax_cross_entropy(&logits, &labels)?;
        loss_sum += loss * chunk.len() as f64;
        top1_sum += topk_accuracy(&logits, &labels, 1)? * chunk.len() as f64;
        top5_sum += topk_accuracy(&logits, &labels, k)? * chunk.len() as f64;
    }
    let n = data.len() as f64;
    Ok(Metrics {
        loss: loss_sum / n,
        top1: top1_sum / n,
        top5: top5_sum / n,
    })
}

/// Owns a model and its optimizer state for the duration of a run.
pub struct Trainer {
    model: Model,
    optimizer: Optimizer,
    config: TrainConfig,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Self {
        Self {
            optimizer: Optimizer::new(config.optimizer),
            model,
            config,
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// One optimizer step on one batch. Returns the batch loss and logits.
    pub fn train_step(&mut self, x: &FloatTensor, labels: &[u32]) -> Result<(f64, FloatTensor)> {
        let logits = self.model.forward_train(x)?;
        let (loss, grad) = softmax_cross_entropy(&logits, labels)?;
        self.model.backward(&grad)?;
        self.optimizer.step(&mut self.model.params())?;
        if self.config.clip_binary_weights {
            self.model.clip_binary_latents();
        }
        Ok((loss, logits))
    }

    /// One shuffled pass over the dataset. Metrics are aggregated from the
    /// training-mode forward of each batch.
    pub fn train_epoch(&mut self, data: &Dataset, epoch: usize) -> Result<Metrics> {
        if data.is_empty() {
            return Err(Error::Config("cannot train on an empty dataset".to_string()));
        }
        let mut rng = epoch_rng(self.config.seed, epoch);
        let order = shuffled_indices(data.len(), &mut rng);
        let mut loss_sum = 0.0f64;
        let mut top1_sum = 0.0f64;
        let mut top5_sum = 0.0f64;
        for chunk in order.chunks(self.config.batch_size.max(1)) {
            let (x, labels) = data.batch_train(chunk, &mut rng)?;
            let (loss, logits) = self.train_step(&x, &labels)?;
            let classes = logits.dim(1);
            loss_sum += loss * chunk.len() as f64;
            top1_sum += topk_accuracy(&logits, &labels, 1)? * chunk.len() as f64;
            top5_sum += topk_accuracy(&logits, &labels, classes.min(5))? * chunk.len() as f64;
        }
        let n = data.len() as f64;
        Ok(Metrics {
            loss: loss_sum / n,
            top1: top1_sum / n,
            top5: top5_sum / n,
        })
    }

    /// Runs the configured number of epochs. Validation columns fall back
    /// to the training set when no validation set is supplied.
    pub fn run(&mut self, train: &Dataset, val: Option<&Dataset>) -> Result<Vec<EpochRecord>> {
        let mut records = Vec::with_capacity(self.config.epochs);
        for epoch in 0..self.config.epochs {
            let tm = self.train_epoch(train, epoch)?;
            let vm = evaluate(&self.model, val.unwrap_or(train), self.config.batch_size)?;
            log::info!(
                "epoch {epoch}: loss {:.4} top1 {:.4} val_top1 {:.4} val_top5 {:.4}",
                tm.loss,
                tm.top1,
                vm.top1,
                vm.top5
            );
            records.push(EpochRecord {
                epoch,
                train_loss: tm.loss,
                train_top1: tm.top1,
                val_top1: vm.top1,
                val_top5: vm.top5,
            });
        }
        Ok(records)
    }
}
