//! Supervised training: class-weighted cross-entropy, Adam, step learning
//! rate decay and image augmentation.
//!
//! A run is a pure function of `(network, dataset, config)`: shuffles are
//! drawn per epoch and augmentations per `(epoch, sample)` from streams keyed
//! by `config.seed`.

mod augment;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use augment::{augment_image, AugmentConfig};

use crate::error::{Error, Result};
use crate::harness::{Dataset, Split};
use crate::net::{Gradients, Network, Params};
use crate::rng::{self, tag};
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub seed: u64,
    pub augmentation: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.001,
            lr_decay_factor: 0.1,
            lr_decay_every: 10,
            seed: 0,
            augmentation: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("train: {m}")));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad("lr_decay_factor must be in (0, 1]");
        }
        if self.lr_decay_every == 0 {
            return bad("lr_decay_every must be positive");
        }
        self.augmentation.validate()
    }
}

/// `learning_rate · lr_decay_factor^floor(epoch / lr_decay_every)`.
pub fn lr_at_epoch(config: &TrainConfig, epoch: usize) -> f64 {
    let steps = (epoch / config.lr_decay_every.max(1)) as i32;
    config.learning_rate * config.lr_decay_factor.powi(steps)
}

/// Inverse-frequency class weights, `N / (class_count · n_c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassWeights(pub Vec<f64>);

impl ClassWeights {
    pub fn uniform(class_count: usize) -> Self {
        Self(vec![1.0; class_count])
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }
}

pub fn compute_class_weights(labels: &[usize], class_count: usize) -> Result<ClassWeights> {
    let mut counts = vec![0usize; class_count];
    for &l in labels {
        if l >= class_count {
            return Err(Error::LabelOutOfRange {
                label: l,
                class_count,
            });
        }
        counts[l] += 1;
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(missing));
    }
    let n = labels.len() as f64;
    Ok(ClassWeights(
        counts.iter().map(|&c| n / (class_count as f64 * c as f64)).collect(),
    ))
}

/// `−weights[target] · ln(max(probs[target], 1e-12))`.
pub fn weighted_cross_entropy(probs: &Tensor, target: usize, weights: &ClassWeights) -> Result<f64> {
    let p = probs.data();
    if target >= p.len() || weights.0.len() != p.len() {
        return Err(Error::LabelOutOfRange {
            label: target,
            class_count: p.len(),
        });
    }
    if let Some(v) = p.iter().find(|v| v.is_nan() || **v < 0.0) {
        return Err(Error::InvalidProbability(format!("negative or NaN entry {v}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidProbability(format!("sums to {total}")));
    }
    Ok(-weights.get(target) * p[target].max(1e-12).ln())
}

/// Gradient of the weighted cross-entropy with respect to the logits:
/// `w_t · (p − onehot(t))`.
pub fn cross_entropy_logit_grad(probs: &Tensor, target: usize, weight: f64) -> Vec<f64> {
    probs
        .data()
        .iter()
        .enumerate()
        .map(|(k, &p)| weight * (p - if k == target { 1.0 } else { 0.0 }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// `None` when the dataset has no validation split.
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub metrics: Vec<EpochMetrics>,
}

/// Renders metrics as CSV with columns `epoch,lr,train_loss,val_accuracy`.
pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "lr", "train_loss", "val_accuracy"]).expect("in-memory write");
    for m in metrics {
        w.write_record([
            m.epoch.to_string(),
            m.lr.to_string(),
            m.train_loss.to_string(),
            m.val_accuracy.map(|a| a.to_string()).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

struct Adam {
    m: Vec<Option<Params>>,
    v: Vec<Option<Params>>,
    step: i32,
}

impl Adam {
    fn new(net: &Network) -> Self {
        let zeros: Vec<Option<Params>> = net
            .layers()
            .iter()
            .map(|l| {
                l.params.as_ref().map(|p| Params {
                    weight: Tensor::zeros(p.weight.shape()),
                    bias: Tensor::zeros(p.bias.shape()),
                })
            })
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn update(&mut self, net: &mut Network, grads: &[Option<Params>], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let m = self.m[i].as_mut().expect("moment layout");
            let v = self.v[i].as_mut().expect("moment layout");
            let p = net.params_mut(i).expect("param layout");
            for (param, grad, m, v) in [
                (&mut p.weight, &g.weight, &mut m.weight, &mut v.weight),
                (&mut p.bias, &g.bias, &mut m.bias, &mut v.bias),
            ] {
                let iter = param
                    .data_mut()
                    .iter_mut()
                    .zip(grad.data())
                    .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
                for ((w, &g), (m, v)) in iter {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Trains `network` on the dataset's train split.
///
/// Batch loss is the class-weighted mean `Σ w_y·l / Σ w_y`. Validation
/// accuracy is measured on the val split after every epoch, without
/// augmentation. `epochs = 0` returns the network unchanged.
pub fn train(network: Network, dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.sample_shape() != network.input_shape() {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: network.input_shape().to_vec(),
            got: dataset.sample_shape().to_vec(),
        });
    }
    if dataset.class_count() != network.class_count() {
        return Err(Error::InvalidConfig(format!(
            "dataset has {} classes, network {}",
            dataset.class_count(),
            network.class_count()
        )));
    }
    let mut net = network;
    let mut metrics = Vec::with_capacity(config.epochs);
    if config.epochs == 0 {
        return Ok(TrainOutcome { network: net, metrics });
    }
    let train_ids = dataset.indices(Split::Train);
    let train_labels: Vec<usize> = train_ids.iter().map(|&i| dataset.label(i)).collect();
    let weights = compute_class_weights(&train_labels, net.class_count())?;
    let val_ids = dataset.indices(Split::Val);
    let augment = dataset.sample_shape().len() == 3 && !config.augmentation.is_identity();
    let mut adam = Adam::new(&net);

    for epoch in 0..config.epochs {
        let lr = lr_at_epoch(config, epoch);
        let mut order = train_ids.clone();
        order.shuffle(&mut rng::stream(config.seed, &[tag::SHUFFLE, epoch as u64]));
        let mut epoch_loss = 0.0;
        let mut epoch_weight = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let mut acc = Adam::new(&net).m;
            let mut batch_loss = 0.0;
            let mut batch_weight = 0.0;
            for &id in batch {
                let x = if augment {
                    let mut r = rng::stream(config.seed, &[tag::AUGMENT, epoch as u64, id as u64]);
                    augment_image(dataset.sample(id), &config.augmentation, &mut r)
                } else {
                    dataset.sample(id).clone()
                };
                let target = dataset.label(id);
                let w = weights.get(target);
                let trace = net.forward(&x, true)?;
                batch_loss += weighted_cross_entropy(&trace.probs, target, &weights)?;
                batch_weight += w;
                let g = net.backward(&trace, &cross_entropy_logit_grad(&trace.probs, target, w))?;
                Gradients::accumulate_params(&mut acc, &g.params, 1.0);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            let scale = 1.0 / batch_weight;
            for p in acc.iter_mut().flatten() {
                p.weight.data_mut().iter_mut().for_each(|v| *v *= scale);
                p.bias.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            adam.update(&mut net, &acc, lr);
            epoch_loss += batch_loss;
            epoch_weight += batch_weight;
        }
        let val_accuracy = if val_ids.is_empty() {
            None
        } else {
            let correct = val_ids
                .iter()
                .map(|&id| net.forward(dataset.sample(id), false).map(|t| t.predicted_class() == dataset.label(id)))
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .filter(|&c| c)
                .count();
            Some(correct as f64 / val_ids.len() as f64)
        };
        let m = EpochMetrics {
            epoch,
            lr,
            train_loss: epoch_loss / epoch_weight,
            val_accuracy,
        };
        log::debug!("epoch {epoch}: lr={lr} loss={} val={:?}", m.train_loss, m.val_accuracy);
        metrics.push(m);
    }
    Ok(TrainOutcome { network: net, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Split;

    #[test]
    fn class_weights_by_hand() {
        assert_eq!(compute_class_weights(&[0, 1, 1, 0], 2).unwrap().0, vec![1.0, 1.0]);
        let w = compute_class_weights(&[0, 0, 0, 1], 2).unwrap().0;
        assert!((w[0] - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(w[1], 2.0);
        assert_eq!(compute_class_weights(&[0, 0, 0], 1).unwrap().0, vec![1.0]);
        assert!(matches!(compute_class_weights(&[0, 2, 0], 3), Err(Error::EmptyClass(1))));
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let ones = ClassWeights::uniform(2);
        let onehot = Tensor::vector(vec![1.0, 0.0]);
        assert!(weighted_cross_entropy(&onehot, 0, &ones).unwrap() <= 1e-11);
        let half = Tensor::vector(vec![0.5, 0.5]);
        let l = weighted_cross_entropy(&half, 0, &ones).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        let l2 = weighted_cross_entropy(&half, 0, &ClassWeights(vec![2.0, 1.0])).unwrap();
        assert!((l2 - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        let neg = Tensor::vector(vec![1.5, -0.5]);
        assert!(matches!(weighted_cross_entropy(&neg, 0, &ones), Err(Error::InvalidProbability(_))));
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        let logits = [0.3, -1.1, 0.8];
        let probs = |z: &[f64]| Tensor::vector(crate::net::ops::softmax(z));
        let w = ClassWeights(vec![1.0, 2.5, 0.5]);
        let g = cross_entropy_logit_grad(&probs(&logits), 1, 2.5);
        for k in 0..3 {
            let h = 1e-6;
            let mut up = logits;
            let mut dn = logits;
            up[k] += h;
            dn[k] -= h;
            let fd = (weighted_cross_entropy(&probs(&up), 1, &w).unwrap()
                - weighted_cross_entropy(&probs(&dn), 1, &w).unwrap())
                / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn step_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(lr_at_epoch(&cfg, 0), 0.001);
        assert_eq!(lr_at_epoch(&cfg, 9), 0.001);
        assert!((lr_at_epoch(&cfg, 10) - 0.0001).abs() < 1e-18);
        assert!((lr_at_epoch(&cfg, 25) - 0.00001).abs() < 1e-18);
    }

    fn blobs(seed: u64) -> Dataset {
        let mut r = rng::stream(seed, &[99]);
        let normal = rand_distr::Normal::new(0.0, 0.5).unwrap();
        use rand_distr::Distribution;
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            let c = i % 2;
            let centre = if c == 0 { -2.0 } else { 2.0 };
            samples.push(Tensor::vector(vec![
                centre + normal.sample(&mut r),
                centre + normal.sample(&mut r),
            ]));
            labels.push(c);
        }
        let mut ds = Dataset::new(vec![2], samples, labels, vec![Split::Train; 200], vec!["a".into(), "b".into()])
            .unwrap();
        ds.assign_splits(seed);
        ds
    }

    #[test]
    fn zero_epochs_returns_initial_network() {
        let ds = blobs(1);
        let mut net = Network::mlp(2, &[16], 2).unwrap();
        net.init_kaiming(7);
        let out = train(
            net.clone(),
            &ds,
            &TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert_eq!(out.network, net);
        assert!(out.metrics.is_empty());
    }

    #[test]
    fn separable_blobs_reach_full_validation_accuracy() {
        let ds = blobs(2);
        let mut net = Network::mlp(2, &[16], 2).unwrap();
        net.init_kaiming(7);
        let cfg = TrainConfig {
            epochs: 30,
            seed: 7,
            ..TrainConfig::default()
        };
        let a = train(net.clone(), &ds, &cfg).unwrap();
        assert!(a.metrics.last().unwrap().val_accuracy.unwrap() >= 0.99);
        let b = train(net, &ds, &cfg).unwrap();
        assert_eq!(a.network, b.network);
        let csv = metrics_csv(&a.metrics);
        assert!(csv.starts_with("epoch,lr,train_loss,val_accuracy\n"));
        assert_eq!(csv.lines().count(), 31);
    }

    #[test]
    fn rejects_mismatched_dataset() {
        let ds = blobs(3);
        let net = Network::mlp(3, &[4], 2).unwrap();
        assert!(matches!(
            train(net, &ds, &TrainConfig::default()),
            Err(Error::ShapeMismatch { layer: 0, .. })
        ));
    }
}
