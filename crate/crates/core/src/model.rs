//! Tiny multilayer perceptron trained with hand-written backpropagation.
//!
//! Parameters live in one flat [`ParamVector`]. For each layer the weight
//! matrix comes first, stored row-major as `fan_out x fan_in`, followed by
//! the `fan_out` biases. Hidden layers use ReLU, the output layer softmax.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound on the probability fed to the logarithm.
pub const LOSS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
}

impl Default for MlpArchitecture {
    /// 16 -> 79 -> 5, i.e. 1743 weights: 56 Kbit at 32 bits per weight.
    fn default() -> Self {
        MlpArchitecture {
            input_dim: 16,
            hidden_dims: vec![79],
            num_classes: 5,
        }
    }
}

/// Offsets of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlot {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: usize,
    pub biases: usize,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize) -> Result<Self> {
        let arch = MlpArchitecture {
            input_dim,
            hidden_dims,
            num_classes,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("training.input_dim", "must be >= 1"));
        }
        if self.num_classes == 0 {
            return Err(Error::config("data.num_classes", "must be >= 1"));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::config("training.hidden_dims", "every hidden width must be >= 1"));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_dims);
        w.push(self.num_classes);
        w
    }

    pub fn layers(&self) -> Vec<LayerSlot> {
        let widths = self.widths();
        let mut offset = 0;
        widths
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let slot = LayerSlot {
                    fan_in,
                    fan_out,
                    weights: offset,
                    biases: offset + fan_in * fan_out,
                };
                offset += fan_in * fan_out + fan_out;
                slot
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }
}

/// Flat model weights, the unit of exchange between UAVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Max absolute coordinate difference.
    pub fn linf_distance(&self, other: &ParamVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn axpy(&mut self, alpha: f64, x: &ParamVector) {
        for (y, x) in self.0.iter_mut().zip(&x.0) {
            *y += alpha * x;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.025,
            local_epochs: 3,
            batch_size: 5,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config("training.learning_rate", "must be a finite number >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("training.batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Glorot-uniform weights, zero biases.
pub fn init_params<R: Rng + ?Sized>(arch: &MlpArchitecture, rng: &mut R) -> ParamVector {
    let mut params = ParamVector::zeros(arch.param_count());
    for layer in arch.layers() {
        let limit = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
        for w in &mut params.0[layer.weights..layer.biases] {
            *w = rng.random_range(-limit..limit);
        }
    }
    params
}

fn check_dims(arch: &MlpArchitecture, params: &ParamVector, features: &[f64]) -> Result<()> {
    if params.len() != arch.param_count() {
        return Err(Error::config(
            "params",
            format!("expected {} parameters, got {}", arch.param_count(), params.len()),
        ));
    }
    if features.len() != arch.input_dim {
        return Err(Error::config(
            "features",
            format!("expected {} features, got {}", arch.input_dim, features.len()),
        ));
    }
    Ok(())
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    for z in logits.iter_mut() {
        *z /= sum;
    }
}

/// Activations of every layer; `acts[0]` is the input, the last entry the
/// softmax output. Hidden entries hold post-ReLU values.
fn forward_trace(arch: &MlpArchitecture, params: &ParamVector, features: &[f64]) -> Vec<Vec<f64>> {
    let layers = arch.layers();
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(features.to_vec());
    for (l, layer) in layers.iter().enumerate() {
        let input = &acts[l];
        let w = &params.0[layer.weights..layer.biases];
        let b = &params.0[layer.biases..layer.biases + layer.fan_out];
        let mut out: Vec<f64> = (0..layer.fan_out)
            .map(|o| {
                let row = &w[o * layer.fan_in..(o + 1) * layer.fan_in];
                row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b[o]
            })
            .collect();
        if l + 1 == layers.len() {
            softmax_in_place(&mut out);
        } else {
            out.iter_mut().for_each(|z| *z = z.max(0.0));
        }
        acts.push(out);
    }
    acts
}

/// Class probabilities for one input.
pub fn forward(arch: &MlpArchitecture, params: &ParamVector, features: &[f64]) -> Result<Vec<f64>> {
    check_dims(arch, params, features)?;
    Ok(forward_trace(arch, params, features).pop().unwrap_or_default())
}

/// `-ln p[label]`, with `p` floored at [`LOSS_EPS`] so confident mistakes
/// stay finite.
pub fn cross_entropy(probabilities: &[f64], label: usize) -> f64 {
    -probabilities[label].max(LOSS_EPS).ln()
}

/// Accumulates the gradient of one sample's loss into `grad` and returns
/// that loss.
fn accumulate_sample(
    arch: &MlpArchitecture,
    layers: &[LayerSlot],
    params: &ParamVector,
    sample: &Sample,
    grad: &mut [f64],
) -> f64 {
    let acts = forward_trace(arch, params, &sample.features);
    let probs = &acts[acts.len() - 1];
    let loss = cross_entropy(probs, sample.label);

    // dL/dz at the output, softmax + cross-entropy combined.
    let mut delta: Vec<f64> = probs.clone();
    delta[sample.label] -= 1.0;

    for l in (0..layers.len()).rev() {
        let layer = layers[l];
        let input = &acts[l];
        for o in 0..layer.fan_out {
            let d = delta[o];
            if d == 0.0 {
                continue;
            }
            let row = &mut grad[layer.weights + o * layer.fan_in..layer.weights + (o + 1) * layer.fan_in];
            for (g, x) in row.iter_mut().zip(input) {
                *g += d * x;
            }
            grad[layer.biases + o] += d;
        }
        if l == 0 {
            break;
        }
        let w = &params.0[layer.weights..layer.biases];
        let mut prev = vec![0.0; layer.fan_in];
        for (o, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            for (i, p) in prev.iter_mut().enumerate() {
                *p += w[o * layer.fan_in + i] * d;
            }
        }
        // ReLU derivative, taken as 0 at the kink.
        for (p, a) in prev.iter_mut().zip(input) {
            if *a <= 0.0 {
                *p = 0.0;
            }
        }
        delta = prev;
    }
    loss
}

fn batch_gradient(arch: &MlpArchitecture, params: &ParamVector, batch: &[&Sample]) -> (ParamVector, f64) {
    let layers = arch.layers();
    let mut grad = vec![0.0; params.len()];
    let mut loss_sum = 0.0;
    for s in batch {
        loss_sum += accumulate_sample(arch, &layers, params, s, &mut grad);
    }
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    (ParamVector(grad), loss_sum)
}

/// Mean cross-entropy gradient over `batch`.
pub fn gradient(arch: &MlpArchitecture, params: &ParamVector, batch: &[Sample]) -> Result<ParamVector> {
    if batch.is_empty() {
        return Err(Error::Protocol("gradient of an empty batch".into()));
    }
    for s in batch {
        check_dims(arch, params, &s.features)?;
    }
    let refs: Vec<&Sample> = batch.iter().collect();
    Ok(batch_gradient(arch, params, &refs).0)
}

/// Mean cross-entropy of `params` over `shard`.
pub fn eval_loss(arch: &MlpArchitecture, params: &ParamVector, shard: &[Sample]) -> f64 {
    if shard.is_empty() {
        return 0.0;
    }
    let total: f64 = shard
        .iter()
        .map(|s| cross_entropy(&forward_trace(arch, params, &s.features)[arch.layers().len()], s.label))
        .sum();
    total / shard.len() as f64
}

/// Mini-batch SGD over the shard, reshuffled from `rng` every epoch.
///
/// Returns the trained weights and the sample-weighted mean loss seen over
/// the last epoch's batches. With zero epochs the input comes back
/// unchanged alongside its evaluation loss.
pub fn local_train<R: Rng + ?Sized>(
    arch: &MlpArchitecture,
    params: &ParamVector,
    shard: &[Sample],
    cfg: &TrainingConfig,
    rng: &mut R,
) -> Result<(ParamVector, f64)> {
    if cfg.local_epochs == 0 {
        return Ok((params.clone(), eval_loss(arch, params, shard)));
    }
    if shard.is_empty() {
        return Err(Error::Protocol("local training on an empty shard".into()));
    }
    if let Some(s) = shard.first() {
        check_dims(arch, params, &s.features)?;
    }
    let mut w = params.clone();
    let mut order: Vec<usize> = (0..shard.len()).collect();
    let mut last_epoch_loss = 0.0;
    for _ in 0..cfg.local_epochs {
        order.shuffle(rng);
        last_epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &shard[i]).collect();
            let (grad, loss_sum) = batch_gradient(arch, &w, &batch);
            last_epoch_loss += loss_sum;
            w.axpy(-cfg.learning_rate, &grad);
        }
    }
    Ok((w, last_epoch_loss / shard.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::stream;

    fn sample(features: Vec<f64>, label: usize) -> Sample {
        Sample { features, label }
    }

    #[test]
    fn default_param_count() {
        assert_eq!(MlpArchitecture::default().param_count(), 16 * 79 + 79 + 79 * 5 + 5);
        assert_eq!(MlpArchitecture::default().param_count(), 1743);
    }

    #[test]
    fn biases_start_at_zero() {
        let arch = MlpArchitecture::new(1, vec![], 1).unwrap();
        let p = init_params(&arch, &mut stream(3, "t", 0));
        assert_eq!(p.len(), 2);
        assert_eq!(p.0[1], 0.0);

        let arch = MlpArchitecture::default();
        let p = init_params(&arch, &mut stream(3, "t", 0));
        for layer in arch.layers() {
            assert!(p.0[layer.biases..layer.biases + layer.fan_out]
                .iter()
                .all(|&b| b == 0.0));
            let limit = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
            assert!(p.0[layer.weights..layer.biases].iter().all(|w| w.abs() <= limit));
        }
    }

    #[test]
    fn init_is_deterministic() {
        let arch = MlpArchitecture::default();
        let a = init_params(&arch, &mut stream(11, "t", 4));
        let b = init_params(&arch, &mut stream(11, "t", 4));
        assert_eq!(a, b);
    }

    #[test]
    fn zero_params_give_uniform_probabilities() {
        let arch = MlpArchitecture::new(3, vec![4], 10).unwrap();
        let p = forward(&arch, &ParamVector::zeros(arch.param_count()), &[0.3, -1.0, 2.0]).unwrap();
        assert!(p.iter().all(|&q| (q - 0.1).abs() < 1e-15));
        assert!((cross_entropy(&p, 7) - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn shifting_output_biases_leaves_probabilities_unchanged() {
        let arch = MlpArchitecture::new(3, vec![4], 3).unwrap();
        let params = init_params(&arch, &mut stream(1, "t", 0));
        let x = [0.5, -0.2, 0.9];
        let before = forward(&arch, &params, &x).unwrap();
        let mut shifted = params.clone();
        let out = *arch.layers().last().unwrap();
        for b in &mut shifted.0[out.biases..out.biases + out.fan_out] {
            *b += 3.7;
        }
        let after = forward(&arch, &shifted, &x).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let arch = MlpArchitecture::new(3, vec![], 2).unwrap();
        let params = ParamVector::zeros(arch.param_count());
        assert!(forward(&arch, &params, &[1.0, 2.0]).unwrap_err().is_config());
        assert!(forward(&arch, &ParamVector::zeros(3), &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn cross_entropy_values() {
        assert!((cross_entropy(&[0.1; 10], 3) - 10f64.ln()).abs() < 1e-10);
        assert_eq!(cross_entropy(&[0.0, 1.0], 1), 0.0);
        assert!((cross_entropy(&[0.5, 0.5], 0) - 2f64.ln()).abs() < 1e-15);
        assert!((cross_entropy(&[1.0, 0.0], 1) - 1e12f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let arch = MlpArchitecture::new(2, vec![3], 2).unwrap();
        let params = init_params(&arch, &mut stream(5, "t", 0));
        let s = sample(vec![0.4, -0.7], 1);
        let g1 = gradient(&arch, &params, std::slice::from_ref(&s)).unwrap();
        let g2 = gradient(&arch, &params, &[s.clone(), s]).unwrap();
        assert!(g1.linf_distance(&g2) < 1e-15);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let arch = MlpArchitecture::new(2, vec![], 2).unwrap();
        assert!(gradient(&arch, &ParamVector::zeros(arch.param_count()), &[]).is_err());
    }

    #[test]
    fn gradient_vanishes_at_logistic_minimum() {
        // Logistic regression on one sample has no finite minimizer, so use
        // two conflicting samples at the same point: the optimum is p = 1/2
        // for both classes, reached at zero weights.
        let arch = MlpArchitecture::new(1, vec![], 2).unwrap();
        let batch = [sample(vec![1.0], 0), sample(vec![1.0], 1)];
        let g = gradient(&arch, &ParamVector::zeros(arch.param_count()), &batch).unwrap();
        let norm = g.0.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-6);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let arch = MlpArchitecture::new(2, vec![3], 2).unwrap();
        let params = init_params(&arch, &mut stream(5, "t", 0));
        let shard = vec![sample(vec![0.1, 0.2], 0), sample(vec![-0.3, 0.4], 1)];
        let cfg = TrainingConfig {
            local_epochs: 0,
            ..Default::default()
        };
        let (out, loss) = local_train(&arch, &params, &shard, &cfg, &mut stream(1, "s", 0)).unwrap();
        assert_eq!(out, params);
        assert_eq!(loss, eval_loss(&arch, &params, &shard));
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let arch = MlpArchitecture::new(2, vec![3], 2).unwrap();
        let params = init_params(&arch, &mut stream(5, "t", 0));
        let shard: Vec<Sample> = (0..7)
            .map(|i| sample(vec![i as f64 * 0.1, 1.0 - i as f64 * 0.2], i % 2))
            .collect();
        let cfg = TrainingConfig {
            learning_rate: 0.0,
            local_epochs: 4,
            batch_size: 3,
        };
        let (out, loss) = local_train(&arch, &params, &shard, &cfg, &mut stream(1, "s", 0)).unwrap();
        assert_eq!(out, params);
        assert!((loss - eval_loss(&arch, &params, &shard)).abs() < 1e-12);
    }

    #[test]
    fn one_full_batch_epoch_is_one_gradient_step() {
        let arch = MlpArchitecture::new(3, vec![5], 3).unwrap();
        let params = init_params(&arch, &mut stream(9, "t", 0));
        let mut rng = stream(9, "d", 0);
        let shard: Vec<Sample> = (0..6)
            .map(|i| sample((0..3).map(|_| rng.random_range(-1.0..1.0)).collect(), i % 3))
            .collect();
        let cfg = TrainingConfig {
            learning_rate: 0.3,
            local_epochs: 1,
            batch_size: shard.len(),
        };
        let (out, _) = local_train(&arch, &params, &shard, &cfg, &mut stream(1, "s", 0)).unwrap();
        let mut expected = params.clone();
        expected.axpy(-0.3, &gradient(&arch, &params, &shard).unwrap());
        assert!(out.linf_distance(&expected) < 1e-12);
    }

    #[test]
    fn local_train_is_deterministic() {
        let arch = MlpArchitecture::new(2, vec![4], 2).unwrap();
        let params = init_params(&arch, &mut stream(5, "t", 0));
        let shard: Vec<Sample> = (0..10)
            .map(|i| sample(vec![i as f64 * 0.1, -(i as f64) * 0.05], i % 2))
            .collect();
        let cfg = TrainingConfig::default();
        let a = local_train(&arch, &params, &shard, &cfg, &mut stream(2, "s", 1)).unwrap();
        let b = local_train(&arch, &params, &shard, &cfg, &mut stream(2, "s", 1)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }

    #[test]
    fn separable_data_loss_halves() {
        let arch = MlpArchitecture::new(2, vec![], 2).unwrap();
        let mut rng = stream(4, "d", 0);
        let shard: Vec<Sample> = (0..20)
            .map(|i| {
                let label = i % 2;
                let c = if label == 0 { -1.0 } else { 1.0 };
                sample(
                    vec![c + rng.random_range(-0.3..0.3), rng.random_range(-1.0..1.0)],
                    label,
                )
            })
            .collect();
        let params = init_params(&arch, &mut stream(4, "i", 0));
        let initial = eval_loss(&arch, &params, &shard);
        let cfg = TrainingConfig {
            local_epochs: 50,
            ..Default::default()
        };
        let (trained, _) = local_train(&arch, &params, &shard, &cfg, &mut stream(4, "s", 0)).unwrap();
        assert!(eval_loss(&arch, &trained, &shard) <= 0.5 * initial);
    }
}
