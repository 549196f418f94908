//! In-memory labeled datasets and batch assembly.

use crate::error::{Error, Result};
use crate::image::{crop_center, crop_random, resize_for_crop, PreprocessConfig};
use crate::tensor::FloatTensor;
use rand::Rng;

/// Labeled samples, optionally wired to a resize+crop pipeline. Samples are
/// stored post-resize; crops are taken at batch-assembly time so random
/// crops differ between epochs.
#[derive(Clone, Debug)]
pub struct Dataset {
    samples: Vec<FloatTensor>,
    labels: Vec<u32>,
    num_classes: usize,
    preprocess: Option<PreprocessConfig>,
}

impl Dataset {
    pub fn new(samples: Vec<FloatTensor>, labels: Vec<u32>, num_classes: usize) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::Config("dataset needs at least one class".to_string()));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::shape(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            samples,
            labels,
            num_classes,
            preprocess: None,
        })
    }

    /// Splits a samples×dim matrix into one row tensor per sample.
    pub fn from_rows(features: &FloatTensor, labels: Vec<u32>, num_classes: usize) -> Result<Self> {
        let [n, d] = features.dims2()?;
        let samples = (0..n)
            .map(|i| {
                FloatTensor::from_parts(vec![d], features.data()[i * d..(i + 1) * d].to_vec())
            })
            .collect();
        Self::new(samples, labels, num_classes)
    }

    /// Applies the resize stage now and remembers the crop stage for batch
    /// time. Images whose post-resize short side undershoots the crop are
    /// upscaled minimally; that fallback is logged once.
    pub fn with_preprocess(mut self, cfg: PreprocessConfig) -> Result<Self> {
        let mut fallbacks = 0usize;
        for s in &mut self.samples {
            let (resized, fell_back) = resize_for_crop(s, &cfg)?;
            if fell_back {
                fallbacks += 1;
            }
            *s = resized;
        }
        if fallbacks > 0 {
            log::warn!(
                "{fallbacks} of {} images were upscaled so the {}px crop fits",
                self.samples.len(),
                cfg.crop
            );
        }
        self.preprocess = Some(cfg);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &FloatTensor {
        &self.samples[i]
    }

    pub fn preprocess(&self) -> Option<&PreprocessConfig> {
        self.preprocess.as_ref()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::shape(format!(
                "subset index {bad} out of range for {} samples",
                self.len()
            )));
        }
        Ok(Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            preprocess: self.preprocess,
        })
    }

    fn assemble(&self, idxs: &[usize], mut crop: impl FnMut(&FloatTensor) -> Result<FloatTensor>) -> Result<(FloatTensor, Vec<u32>)> {
        if idxs.is_empty() {
            return Err(Error::shape("empty batch".to_string()));
        }
        if let Some(&bad) = idxs.iter().find(|&&i| i >= self.len()) {
            return Err(Error::shape(format!(
                "batch index {bad} out of range for {} samples",
                self.len()
            )));
        }
        let mut views = Vec::with_capacity(idxs.len());
        for &i in idxs {
            views.push(crop(&self.samples[i])?);
        }
        let shape = views[0].shape().to_vec();
        if let Some(odd) = views.iter().find(|v| v.shape() != shape) {
            return Err(Error::shape(format!(
                "cannot stack samples of shapes {:?} and {:?}",
                shape,
                odd.shape()
            )));
        }
        let mut batch_shape = vec![idxs.len()];
        batch_shape.extend_from_slice(&shape);
        let mut data = Vec::with_capacity(idxs.len() * views[0].numel());
        for v in &views {
            data.extend_from_slice(v.data());
        }
        let labels = idxs.iter().map(|&i| self.labels[i]).collect();
        Ok((FloatTensor::from_parts(batch_shape, data), labels))
    }

    /// Evaluation batches always use center crops.
    pub fn batch_eval(&self, idxs: &[usize]) -> Result<(FloatTensor, Vec<u32>)> {
        match self.preprocess {
            Some(cfg) => self.assemble(idxs, |s| crop_center(s, cfg.crop)),
            None => self.assemble(idxs, |s| Ok(s.clone())),
        }
    }

    /// Training batches use random crops while the pipeline is in train
    /// mode, center crops otherwise.
    pub fn batch_train(&self, idxs: &[usize], rng: &mut impl Rng) -> Result<(FloatTensor, Vec<u32>)> {
        match self.preprocess {
            Some(cfg) if cfg.train_mode => self.assemble(idxs, |s| crop_random(s, cfg.crop, rng)),
            Some(cfg) => self.assemble(idxs, |s| crop_center(s, cfg.crop)),
            None => self.assemble(idxs, |s| Ok(s.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat_set() -> Dataset {
        let samples = (0..4)
            .map(|i| FloatTensor::filled(vec![3], i as f32))
            .collect();
        Dataset::new(samples, vec![0, 1, 0, 1], 2).unwrap()
    }

    #[test]
    fn validates_construction() {
        assert!(Dataset::new(vec![FloatTensor::zeros(vec![2])], vec![0, 1], 2).is_err());
        assert!(Dataset::new(vec![FloatTensor::zeros(vec![2])], vec![5], 2).is_err());
        assert!(Dataset::new(vec![], vec![], 0).is_err());
    }

    #[test]
    fn batches_stack_in_index_order() {
        let ds = flat_set();
        let (x, y) = ds.batch_eval(&[2, 0]).unwrap();
        assert_eq!(x.shape(), &[2, 3]);
        assert_eq!(&x.data()[..3], &[2.0, 2.0, 2.0]);
        assert_eq!(&x.data()[3..], &[0.0, 0.0, 0.0]);
        assert_eq!(y, vec![0, 0]);
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        let ds = flat_set();
        assert!(ds.batch_eval(&[]).is_err());
        assert!(ds.batch_eval(&[9]).is_err());
    }

    #[test]
    fn preprocess_resizes_then_crops() {
        let samples = vec![
            FloatTensor::filled(vec![1, 40, 20], 0.5),
            FloatTensor::filled(vec![1, 16, 64], 0.25),
        ];
        let cfg = PreprocessConfig::new(32, 16).unwrap();
        let ds = Dataset::new(samples, vec![0, 1], 2)
            .unwrap()
            .with_preprocess(cfg)
            .unwrap();
        let (x, _) = ds.batch_eval(&[0, 1]).unwrap();
        assert_eq!(x.shape(), &[2, 1, 16, 16]);
        // constants survive resize and crop untouched
        assert!(x.data()[..256].iter().all(|&v| v == 0.5));
        assert!(x.data()[256..].iter().all(|&v| v == 0.25));
    }

    #[test]
    fn random_crops_are_rng_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let samples = vec![FloatTensor::from_fn(vec![1, 12, 12], |i| i as f32)];
        let cfg = PreprocessConfig::new(12, 8).unwrap();
        let ds = Dataset::new(samples, vec![0], 1)
            .unwrap()
            .with_preprocess(cfg)
            .unwrap();
        let (a, _) = ds.batch_train(&[0], &mut rng).unwrap();
        let mut rng2 = ChaCha8Rng::seed_from_u64(90);
        let (b, _) = ds.batch_train(&[0], &mut rng2).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn from_rows_splits_features() {
        let f = FloatTensor::from_parts(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let ds = Dataset::from_rows(&f, vec![1, 0], 2).unwrap();
        assert_eq!(ds.sample(1).data(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn subset_keeps_alignment() {
        let ds = flat_set();
        let sub = ds.subset(&[3, 1]).unwrap();
        assert_eq!(sub.labels(), &[1, 1]);
        assert_eq!(sub.sample(0).data(), &[3.0, 3.0, 3.0]);
    }
}
