use rand_core::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::mlp::Mlp;
use super::Model;
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, RngState};

pub const HIDDEN_UNITS: usize = 200;
pub const CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 20, learning_rate: 0.01, batch_size: 8, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: Model,
    pub epochs: Vec<EpochLog>,
}

/// Trains the `D -> 200 -> ReLU -> 10` classifier with plain mini-batch SGD on
/// softmax cross-entropy.
pub fn train_mlp(train: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    train_mlp_with(train, &[train.dim(), HIDDEN_UNITS, CLASSES], cfg)
}

/// Same as [`train_mlp`] with explicit layer widths (input first).
pub fn train_mlp_with(train: &Dataset, widths: &[usize], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::data("training set is empty"));
    }
    if widths.len() < 2 || widths[0] != train.dim() {
        return Err(Error::config(format!(
            "layer widths {widths:?} do not start with the input dimension {}",
            train.dim()
        )));
    }
    let classes = *widths.last().expect("checked");
    if let Some(&l) = train.labels().iter().find(|&&l| l as usize >= classes) {
        return Err(Error::data(format!("label {l} out of range for {classes} classes")));
    }

    let mut mlp = init_mlp(widths, cfg.seed)?;
    let mut trainer = Trainer::new(&mlp);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let shuffle_seed = derive_seed(cfg.seed, 0x5348_5546);
    let mut x = vec![0.0; train.dim()];
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        shuffle(&mut order, RngState::new(shuffle_seed, epoch as u64));
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            for &idx in batch {
                train.image_into(idx, &mut x);
                let (loss, hit) = trainer.accumulate(&mlp, &x, train.label(idx));
                loss_sum += loss;
                correct += hit as usize;
            }
            trainer.step(&mut mlp, cfg.learning_rate / batch.len() as f64);
        }
        let n = train.len() as f64;
        if !loss_sum.is_finite() {
            return Err(Error::domain(format!("training diverged in epoch {}", epoch + 1)));
        }
        log.push(EpochLog { epoch: epoch + 1, mean_loss: loss_sum / n, train_accuracy: correct as f64 / n });
    }
    Ok(TrainReport { model: Model::Mlp(mlp), epochs: log })
}

/// Fraction of examples whose highest score is the label.
pub fn accuracy(model: &Model, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::data("empty dataset"));
    }
    let hits: Result<Vec<bool>> = (0..data.len())
        .into_par_iter()
        .map(|i| Ok(argmax(&model.forward(&data.image(i))?) == data.label(i)))
        .collect();
    Ok(hits?.iter().filter(|&&h| h).count() as f64 / data.len() as f64)
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn init_mlp(widths: &[usize], seed: u64) -> Result<Mlp> {
    Mlp::random(widths, seed)
}

fn shuffle(order: &mut [usize], state: RngState) {
    let mut rng = state.uniform_source();
    for i in (1..order.len()).rev() {
        let j = ((rng.next_u64() as u128 * (i as u128 + 1)) >> 64) as usize;
        order.swap(i, j);
    }
}

/// Gradient accumulators with per-layer lists of touched weight rows, so
/// sparse inputs only pay for the rows they activate.
struct Trainer {
    pre: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
    grad_w: Vec<Vec<f64>>,
    grad_b: Vec<Vec<f64>>,
    touched: Vec<Vec<usize>>,
    touched_flag: Vec<Vec<bool>>,
}

impl Trainer {
    fn new(mlp: &Mlp) -> Self {
        let layers = mlp.layers();
        Self {
            pre: layers.iter().map(|l| vec![0.0; l.fan_out]).collect(),
            acts: layers.iter().map(|l| vec![0.0; l.fan_in]).collect(),
            grad_w: layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            grad_b: layers.iter().map(|l| vec![0.0; l.fan_out]).collect(),
            touched: layers.iter().map(|_| Vec::new()).collect(),
            touched_flag: layers.iter().map(|l| vec![false; l.fan_in]).collect(),
        }
    }

    /// Adds one example's gradient; returns (loss, correct).
    fn accumulate(&mut self, mlp: &Mlp, x: &[f64], label: usize) -> (f64, bool) {
        let layers = mlp.layers();
        let last = layers.len() - 1;
        self.acts[0].copy_from_slice(x);
        for (l, layer) in layers.iter().enumerate() {
            layer.apply(&self.acts[l], &mut self.pre[l]);
            if l < last {
                let (pre, next) = (&self.pre[l], &mut self.acts[l + 1]);
                for (a, &z) in next.iter_mut().zip(pre) {
                    *a = z.max(0.0);
                }
            }
        }
        let logits = &self.pre[last];
        let hit = argmax(logits) == label;
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|z| (z - max).exp()).sum();
        let loss = max + sum_exp.ln() - logits[label];
        let mut delta: Vec<f64> = logits.iter().map(|z| (z - max).exp() / sum_exp).collect();
        delta[label] -= 1.0;

        for l in (0..layers.len()).rev() {
            let layer = &layers[l];
            let fan_out = layer.fan_out;
            let gw = &mut self.grad_w[l];
            for (i, &a) in self.acts[l].iter().enumerate() {
                if a != 0.0 {
                    for (g, d) in gw[i * fan_out..(i + 1) * fan_out].iter_mut().zip(&delta) {
                        *g += a * d;
                    }
                    if !self.touched_flag[l][i] {
                        self.touched_flag[l][i] = true;
                        self.touched[l].push(i);
                    }
                }
            }
            for (g, d) in self.grad_b[l].iter_mut().zip(&delta) {
                *g += d;
            }
            if l > 0 {
                let mut back = vec![0.0; layer.fan_in];
                layer.back(&delta, &mut back);
                for (b, &z) in back.iter_mut().zip(&self.pre[l - 1]) {
                    if z <= 0.0 {
                        *b = 0.0;
                    }
                }
                delta = back;
            }
        }
        (loss, hit)
    }

    fn step(&mut self, mlp: &mut Mlp, scale: f64) {
        for (l, layer) in mlp.layers_mut().iter_mut().enumerate() {
            let fan_out = layer.fan_out;
            let gw = &mut self.grad_w[l];
            // ascending row order keeps the update independent of visit order
            self.touched[l].sort_unstable();
            for &i in &self.touched[l] {
                let rows = i * fan_out..(i + 1) * fan_out;
                for (w, g) in layer.weights[rows.clone()].iter_mut().zip(&mut gw[rows]) {
                    *w -= scale * *g;
                    *g = 0.0;
                }
                self.touched_flag[l][i] = false;
            }
            self.touched[l].clear();
            for (b, g) in layer.bias.iter_mut().zip(&mut self.grad_b[l]) {
                *b -= scale * *g;
                *g = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DataRange;

    /// Two well-separated blobs in [0, 1]^4.
    fn blobs(n: usize) -> Dataset {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        let mut s = RngState::new(5, 0).normals();
        for i in 0..n {
            let label = (i % 2) as u8;
            let center = if label == 0 { 0.25 } else { 0.75 };
            for _ in 0..4 {
                images.push((center + 0.05 * s.next_normal()).clamp(0.0, 1.0));
            }
            labels.push(label);
        }
        Dataset::from_dense(vec![4], images, labels, DataRange::unit()).unwrap()
    }

    #[test]
    fn learns_separable_blobs() {
        let data = blobs(200);
        let cfg = TrainConfig { epochs: 30, learning_rate: 0.1, batch_size: 4, seed: 1 };
        let report = train_mlp_with(&data, &[4, 8, 2], &cfg).unwrap();
        assert_eq!(report.epochs.len(), 30);
        assert!(report.epochs[29].mean_loss < report.epochs[0].mean_loss);
        assert!(accuracy(&report.model, &data).unwrap() > 0.95);
    }

    #[test]
    fn same_seed_same_parameters() {
        let data = blobs(64);
        let cfg = TrainConfig { epochs: 3, learning_rate: 0.05, batch_size: 3, seed: 9 };
        let a = train_mlp_with(&data, &[4, 6, 2], &cfg).unwrap().model;
        let b = train_mlp_with(&data, &[4, 6, 2], &cfg).unwrap().model;
        assert_eq!(a, b);
        let c = train_mlp_with(&data, &[4, 6, 2], &TrainConfig { seed: 10, ..cfg }).unwrap().model;
        assert_ne!(a, c);
    }

    #[test]
    fn config_and_data_errors() {
        let data = blobs(4);
        let zero_epochs = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(matches!(train_mlp_with(&data, &[4, 3, 2], &zero_epochs), Err(Error::Config(_))));
        let bad_lr = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        assert!(matches!(train_mlp_with(&data, &[4, 3, 2], &bad_lr), Err(Error::Config(_))));
        assert!(matches!(train_mlp_with(&data, &[5, 3, 2], &TrainConfig::default()), Err(Error::Config(_))));
        let empty = Dataset::from_dense(vec![4], vec![], vec![], DataRange::unit()).unwrap();
        assert!(matches!(train_mlp_with(&empty, &[4, 3, 2], &TrainConfig::default()), Err(Error::Data(_))));
        // labels 0/1 do not fit a single class
        assert!(matches!(train_mlp_with(&data, &[4, 3, 1], &TrainConfig::default()), Err(Error::Data(_))));
    }

    #[test]
    fn init_is_bounded() {
        let m = init_mlp(&[16, 5, 3], 2).unwrap();
        for layer in m.layers() {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            assert!(layer.weights.iter().chain(&layer.bias).all(|w| w.abs() <= bound));
        }
    }
}
