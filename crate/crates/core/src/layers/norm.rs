//! Batch normalization, power-of-two scale approximation, and the folded
//! shift-based inference mode.

use crate::error::{Error, Result};
use crate::tensor::FloatTensor;

/// Channel axis is axis 1 for both rank-2 (batch×features) and rank-4
/// (batch×channels×h×w) activations. Returns (channels, inner stride).
fn channel_layout(shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [_, c] => Ok((*c, 1)),
        [_, c, h, w] => Ok((*c, h * w)),
        other => Err(Error::shape(format!(
            "batch norm expects rank 2 or 4, got shape {other:?}"
        ))),
    }
}

/// Per-channel normalization with running statistics.
///
/// Statistics accumulate in f64 and use the biased variance. Training mode
/// requires at least two rows per channel; inference normalizes with the
/// running estimates.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    gamma: FloatTensor, // all four per-channel, shape [C]
    beta: FloatTensor,
    running_mean: FloatTensor,
    running_var: FloatTensor,
    momentum: f32,
    eps: f32,
    grad_gamma: FloatTensor,
    grad_beta: FloatTensor,
    cache: Option<BnCache>,
}

#[derive(Clone, Debug)]
struct BnCache {
    xhat: FloatTensor,
    inv_std: Vec<f64>,
}

pub const BN_EPS: f32 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.9;

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: FloatTensor::filled(vec![channels], 1.0),
            beta: FloatTensor::zeros(vec![channels]),
            running_mean: FloatTensor::zeros(vec![channels]),
            running_var: FloatTensor::filled(vec![channels], 1.0),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
            grad_gamma: FloatTensor::zeros(vec![channels]),
            grad_beta: FloatTensor::zeros(vec![channels]),
            cache: None,
        }
    }

    pub fn from_params(
        gamma: FloatTensor,
        beta: FloatTensor,
        running_mean: FloatTensor,
        running_var: FloatTensor,
        momentum: f32,
        eps: f32,
    ) -> Result<Self> {
        let c = gamma.numel();
        for (name, t) in [
            ("beta", &beta),
            ("running_mean", &running_mean),
            ("running_var", &running_var),
        ] {
            if t.numel() != c || t.rank() != 1 {
                return Err(Error::shape(format!(
                    "batch norm {name} shape {:?} does not match {c} channels",
                    t.shape()
                )));
            }
        }
        if gamma.rank() != 1 {
            return Err(Error::shape("batch norm gamma must be rank 1".to_string()));
        }
        if !(0.0 < momentum && momentum < 1.0) || eps <= 0.0 {
            return Err(Error::Config(format!(
                "batch norm momentum {momentum} / eps {eps} out of range"
            )));
        }
        if running_var.data().iter().any(|&v| v < 0.0) {
            return Err(Error::Numeric(
                "batch norm running variance must be nonnegative".to_string(),
            ));
        }
        Ok(Self {
            grad_gamma: FloatTensor::zeros(vec![c]),
            grad_beta: FloatTensor::zeros(vec![c]),
            gamma,
            beta,
            running_mean,
            running_var,
            momentum,
            eps,
            cache: None,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    pub fn gamma(&self) -> &FloatTensor {
        &self.gamma
    }

    pub fn beta(&self) -> &FloatTensor {
        &self.beta
    }

    pub fn running_mean(&self) -> &FloatTensor {
        &self.running_mean
    }

    pub fn running_var(&self) -> &FloatTensor {
        &self.running_var
    }

    pub fn momentum(&self) -> f32 {
        self.momentum
    }

    pub fn eps(&self) -> f32 {
        self.eps
    }

    fn check_channels(&self, shape: &[usize]) -> Result<(usize, usize)> {
        let (c, inner) = channel_layout(shape)?;
        if c != self.channels() {
            return Err(Error::shape(format!(
                "input has {c} channels, batch norm has {}",
                self.channels()
            )));
        }
        Ok((c, inner))
    }

    pub fn forward_train(&mut self, x: &FloatTensor) -> Result<FloatTensor> {
        let (c, inner) = self.check_channels(x.shape())?;
        if x.shape()[0] < 2 {
            return Err(Error::state(
                "batch norm training requires batch size >= 2",
            ));
        }
        let per_channel = x.numel() / c;
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        let xd = x.data();
        for (i, &v) in xd.iter().enumerate() {
            mean[(i / inner) % c] += v as f64;
        }
        for m in &mut mean {
            *m /= per_channel as f64;
        }
        for (i, &v) in xd.iter().enumerate() {
            let ch = (i / inner) % c;
            let d = v as f64 - mean[ch];
            var[ch] += d * d;
        }
        for v in &mut var {
            *v /= per_channel as f64;
        }
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + self.eps as f64).sqrt()).collect();

        let mut xhat = vec![0.0f32; xd.len()];
        let mut out = vec![0.0f32; xd.len()];
        let gd = self.gamma.data();
        let bd = self.beta.data();
        for (i, &v) in xd.iter().enumerate() {
            let ch = (i / inner) % c;
            let h = ((v as f64 - mean[ch]) * inv_std[ch]) as f32;
            xhat[i] = h;
            out[i] = gd[ch] * h + bd[ch];
        }

        let m = self.momentum;
        for ch in 0..c {
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = m * *rm + (1.0 - m) * mean[ch] as f32;
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = m * *rv + (1.0 - m) * var[ch] as f32;
        }

        self.cache = Some(BnCache {
            xhat: FloatTensor::from_parts(x.shape().to_vec(), xhat),
            inv_std,
        });
        Ok(FloatTensor::from_parts(x.shape().to_vec(), out))
    }

    pub fn forward_infer(&self, x: &FloatTensor) -> Result<FloatTensor> {
        let (c, inner) = self.check_channels(x.shape())?;
        let gd = self.gamma.data();
        let bd = self.beta.data();
        let md = self.running_mean.data();
        let vd = self.running_var.data();
        let scale: Vec<f32> = (0..c)
            .map(|ch| gd[ch] / (vd[ch] + self.eps).sqrt())
            .collect();
        Ok(x.map_indexed(|i, v| {
            let ch = (i / inner) % c;
            scale[ch] * (v - md[ch]) + bd[ch]
        }))
    }

    pub fn backward(&mut self, grad_out: &FloatTensor) -> Result<FloatTensor> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::state("batch norm backward without a training forward"))?;
        if grad_out.shape() != cache.xhat.shape() {
            return Err(Error::shape(format!(
                "batch norm gradient shape {:?} does not match forward shape {:?}",
                grad_out.shape(),
                cache.xhat.shape()
            )));
        }
        let (c, inner) = self.check_channels(grad_out.shape())?;
        let n = (grad_out.numel() / c) as f64;
        let gd = grad_out.data();
        let hd = cache.xhat.data();
        let gamma = self.gamma.data();

        let mut sum_g = vec![0.0f64; c]; // Σ grad·gamma per channel
        let mut sum_gh = vec![0.0f64; c]; // Σ grad·gamma·xhat
        let mut grad_gamma = vec![0.0f64; c];
        let mut grad_beta = vec![0.0f64; c];
        for i in 0..gd.len() {
            let ch = (i / inner) % c;
            let g = gd[i] as f64;
            let gx = g * gamma[ch] as f64;
            sum_g[ch] += gx;
            sum_gh[ch] += gx * hd[i] as f64;
            grad_gamma[ch] += g * hd[i] as f64;
            grad_beta[ch] += g;
        }
        for ch in 0..c {
            self.grad_gamma.data_mut()[ch] = grad_gamma[ch] as f32;
            self.grad_beta.data_mut()[ch] = grad_beta[ch] as f32;
        }
        let mut grad_in = vec![0.0f32; gd.len()];
        for i in 0..gd.len() {
            let ch = (i / inner) % c;
            let gx = gd[i] as f64 * gamma[ch] as f64;
            grad_in[i] = ((cache.inv_std[ch] / n)
                * (n * gx - sum_g[ch] - hd[i] as f64 * sum_gh[ch])) as f32;
        }
        Ok(FloatTensor::from_parts(grad_out.shape().to_vec(), grad_in))
    }

    pub(crate) fn param_slots(&mut self) -> Vec<super::ParamSlot<'_>> {
        vec![
            super::ParamSlot {
                value: &mut self.gamma,
                grad: &mut self.grad_gamma,
                clip_unit: false,
            },
            super::ParamSlot {
                value: &mut self.beta,
                grad: &mut self.grad_beta,
                clip_unit: false,
            },
        ]
    }
}

/// Nearest power of two, sign preserved; ap2(0) = 0.
pub fn ap2(x: f32) -> f32 {
    match ap2_parts(x) {
        Some((sign, exp)) => sign * 2.0f64.powi(exp) as f32,
        None => 0.0,
    }
}

/// Decomposition of ap2: returns (sign as ±1.0, exponent) or None for 0.
pub fn ap2_parts(x: f32) -> Option<(f32, i32)> {
    if x == 0.0 {
        return None;
    }
    let exp = (x.abs() as f64).log2().round() as i32;
    Some((if x < 0.0 { -1.0 } else { 1.0 }, exp))
}

/// Inference-only normalization where every scale is ±2^k (or 0), so the
/// multiply reduces to a bit shift plus an add.
#[derive(Clone, Debug)]
pub struct ShiftNorm {
    signs: Vec<i8>, // −1, 0, +1 per channel
    exponents: Vec<i32>,
    offsets: Vec<f32>,
    scales: Vec<f32>, // sign·2^exp, precomputed
}

impl ShiftNorm {
    pub fn from_parts(signs: Vec<i8>, exponents: Vec<i32>, offsets: Vec<f32>) -> Result<Self> {
        if signs.len() != exponents.len() || signs.len() != offsets.len() {
            return Err(Error::shape(
                "shift norm channel arrays must have equal length".to_string(),
            ));
        }
        if let Some(s) = signs.iter().find(|s| ![-1, 0, 1].contains(*s)) {
            return Err(Error::Numeric(format!("shift norm sign {s} not in {{-1,0,1}}")));
        }
        let scales = signs
            .iter()
            .zip(&exponents)
            .map(|(&s, &e)| s as f32 * 2.0f64.powi(e) as f32)
            .collect();
        Ok(Self {
            signs,
            exponents,
            offsets,
            scales,
        })
    }

    pub fn channels(&self) -> usize {
        self.signs.len()
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn exponents(&self) -> &[i32] {
        &self.exponents
    }

    pub fn offsets(&self) -> &[f32] {
        &self.offsets
    }

    pub fn forward_infer(&self, x: &FloatTensor) -> Result<FloatTensor> {
        let (c, inner) = channel_layout(x.shape())?;
        if c != self.channels() {
            return Err(Error::shape(format!(
                "input has {c} channels, shift norm has {}",
                self.channels()
            )));
        }
        Ok(x.map_indexed(|i, v| {
            let ch = (i / inner) % c;
            self.scales[ch] * v + self.offsets[ch]
        }))
    }
}

/// Folds trained batch-norm statistics into a ShiftNorm: the effective
/// per-channel scale gamma/√(var+eps) is replaced by its nearest power of
/// two and the mean/beta terms collapse into one additive offset.
pub fn fold_bn_to_shift(bn: &BatchNorm) -> Result<ShiftNorm> {
    let c = bn.channels();
    let mut signs = Vec::with_capacity(c);
    let mut exponents = Vec::with_capacity(c);
    let mut offsets = Vec::with_capacity(c);
    for ch in 0..c {
        let var = bn.running_var().data()[ch];
        if var <= 0.0 {
            return Err(Error::state(format!(
                "cannot fold channel {ch}: running variance {var} is not positive"
            )));
        }
        let scale = bn.gamma().data()[ch] as f64 / (var as f64 + bn.eps() as f64).sqrt();
        let (sign, exp) = match ap2_parts(scale as f32) {
            Some((s, e)) => (s as i8, e),
            None => (0, 0),
        };
        let approx = sign as f32 * 2.0f64.powi(exp) as f32;
        signs.push(sign);
        exponents.push(exp);
        offsets.push(bn.beta().data()[ch] - approx * bn.running_mean().data()[ch]);
    }
    ShiftNorm::from_parts(signs, exponents, offsets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalizes_two_point_batch() {
        let mut bn = BatchNorm::new(1);
        let x = FloatTensor::from_parts(vec![2, 1], vec![1.0, 3.0]);
        let y = bn.forward_train(&x).unwrap();
        // mean 2, biased var 1, so outputs sit just inside ±1
        assert!((y.data()[0] + 1.0).abs() < 1e-4);
        assert!((y.data()[1] - 1.0).abs() < 1e-4);
        // running stats moved 10% toward the batch
        assert!((bn.running_mean().data()[0] - 0.2).abs() < 1e-6);
        assert!((bn.running_var().data()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn inference_with_unit_stats_is_identity() {
        let bn = BatchNorm::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let x = FloatTensor::from_fn(vec![4, 3], |_| rng.gen_range(-2.0..2.0));
        let y = bn.forward_infer(&x).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn train_output_is_standardized() {
        let mut bn = BatchNorm::new(2);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let x = FloatTensor::from_fn(vec![64, 2, 3, 3], |_| rng.gen_range(-5.0..5.0));
        let y = bn.forward_train(&x).unwrap();
        for ch in 0..2 {
            let mut vals = Vec::new();
            for (i, &v) in y.data().iter().enumerate() {
                if (i / 9) % 2 == ch {
                    vals.push(v as f64);
                }
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-5, "channel {ch} mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "channel {ch} var {var}");
        }
    }

    #[test]
    fn train_rejects_single_row() {
        let mut bn = BatchNorm::new(2);
        let x = FloatTensor::zeros(vec![1, 2]);
        assert!(matches!(bn.forward_train(&x), Err(Error::State(_))));
    }

    #[test]
    fn grad_beta_sums_gradient() {
        let mut bn = BatchNorm::new(2);
        let x = FloatTensor::from_parts(vec![3, 2], vec![1.0, -1.0, 2.0, 0.5, 3.0, 2.5]);
        bn.forward_train(&x).unwrap();
        let g = FloatTensor::filled(vec![3, 2], 2.0);
        bn.backward(&g).unwrap();
        let slots = bn.param_slots();
        assert_eq!(slots[1].grad.data(), &[6.0, 6.0]);
    }

    #[test]
    fn constant_batch_constant_grad_flows_nothing() {
        let mut bn = BatchNorm::new(1);
        let x = FloatTensor::filled(vec![4, 1], 3.0);
        bn.forward_train(&x).unwrap();
        let gi = bn.backward(&FloatTensor::filled(vec![4, 1], 1.0)).unwrap();
        for &v in gi.data() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn backward_requires_forward() {
        let mut bn = BatchNorm::new(1);
        assert!(matches!(
            bn.backward(&FloatTensor::zeros(vec![2, 1])),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn ap2_fixed_points_and_examples() {
        assert_eq!(ap2(1.0), 1.0);
        assert_eq!(ap2(0.3), 0.25);
        assert_eq!(ap2(-6.0), -8.0);
        assert_eq!(ap2(0.0), 0.0);
        for e in -10..10 {
            let p = 2.0f32.powi(e);
            assert_eq!(ap2(p), p);
            assert_eq!(ap2(-p), -p);
        }
    }

    #[test]
    fn ap2_ratio_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let lo = 2.0f64.powf(-0.5);
        let hi = 2.0f64.powf(0.5);
        for _ in 0..2000 {
            let mag = 2.0f64.powf(rng.gen_range(-12.0..12.0)) as f32;
            let x = if rng.gen::<bool>() { mag } else { -mag };
            let ratio = (ap2(x) / x) as f64;
            assert!((lo..=hi).contains(&ratio), "x={x} ratio={ratio}");
        }
    }

    #[test]
    fn fold_produces_shift_scales() {
        let bn = BatchNorm::from_params(
            FloatTensor::from_parts(vec![2], vec![1.0, 0.3]),
            FloatTensor::from_parts(vec![2], vec![0.5, -1.0]),
            FloatTensor::from_parts(vec![2], vec![2.0, 0.0]),
            FloatTensor::from_parts(vec![2], vec![1.0 - BN_EPS, 1.0 - BN_EPS]),
            BN_MOMENTUM,
            BN_EPS,
        )
        .unwrap();
        let sn = fold_bn_to_shift(&bn).unwrap();
        assert_eq!(sn.exponents(), &[0, -2]);
        assert_eq!(sn.signs(), &[1, 1]);
        // offset = beta − scale·mean
        assert!((sn.offsets()[0] - (0.5 - 1.0 * 2.0)).abs() < 1e-6);
        assert!((sn.offsets()[1] - -1.0).abs() < 1e-6);
    }

    #[test]
    fn fold_rejects_nonpositive_variance() {
        let bn = BatchNorm::from_params(
            FloatTensor::filled(vec![1], 1.0),
            FloatTensor::zeros(vec![1]),
            FloatTensor::zeros(vec![1]),
            FloatTensor::zeros(vec![1]),
            BN_MOMENTUM,
            BN_EPS,
        )
        .unwrap();
        assert!(matches!(fold_bn_to_shift(&bn), Err(Error::State(_))));
    }

    #[test]
    fn folded_matches_exact_bn_when_scale_is_power_of_two() {
        let bn = BatchNorm::from_params(
            FloatTensor::from_parts(vec![2], vec![0.5, 2.0]),
            FloatTensor::from_parts(vec![2], vec![0.1, -0.7]),
            FloatTensor::from_parts(vec![2], vec![1.5, -0.4]),
            FloatTensor::from_parts(vec![2], vec![1.0 - BN_EPS, 1.0 - BN_EPS]),
            BN_MOMENTUM,
            BN_EPS,
        )
        .unwrap();
        let sn = fold_bn_to_shift(&bn).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let x = FloatTensor::from_fn(vec![5, 2], |_| rng.gen_range(-3.0..3.0));
        let exact = bn.forward_infer(&x).unwrap();
        let folded = sn.forward_infer(&x).unwrap();
        for (a, b) in exact.data().iter().zip(folded.data()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }
}
