//! Training loop: seeded split, class-balanced batches, momentum SGD with a stepped
//! learning rate, early stopping on validation loss, and CSV logging.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::loss::{batch_loss, loss_gradient};
use super::model::EmbeddingModel;
use super::optim::{stepped_lr, SgdMomentum};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub margin: f64,
    pub base_lr: f64,
    /// Epoch indices at which the learning rate drops by `lr_factor`.
    pub lr_boundaries: Vec<usize>,
    pub lr_factor: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Samples drawn per class in each batch.
    pub samples_per_class: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Fraction of samples used for training; the rest is validation.
    pub split_fraction: f64,
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    /// When false, `wall_seconds` is logged as 0 so logs are byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            base_lr: 0.05,
            lr_boundaries: Vec::new(),
            lr_factor: 10.0,
            momentum: 0.9,
            batch_size: 32,
            samples_per_class: 4,
            max_epochs: 30,
            patience: 5,
            seed: 0,
            split_fraction: 0.85,
            hidden_dims: vec![64],
            embed_dim: 32,
            record_wall_time: true,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return bad(format!("base_lr must be positive, got {}", self.base_lr));
        }
        if !(self.lr_factor.is_finite() && self.lr_factor > 0.0) {
            return bad(format!("lr_factor must be positive, got {}", self.lr_factor));
        }
        if !self.lr_boundaries.windows(2).all(|w| w[0] < w[1]) {
            return bad("lr_boundaries must be strictly increasing".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(format!("split_fraction must be in (0, 1), got {}", self.split_fraction));
        }
        if self.samples_per_class < 2 || self.batch_size < 2 * self.samples_per_class {
            return bad("batch must hold at least two classes of samples_per_class >= 2".into());
        }
        if self.max_epochs == 0 || self.embed_dim == 0 || self.hidden_dims.contains(&0) {
            return bad("max_epochs, embed_dim and hidden widths must be positive".into());
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        stepped_lr(self.base_lr, &self.lr_boundaries, self.lr_factor, epoch)
    }

    pub fn layer_dims(&self, in_dim: usize) -> Vec<usize> {
        std::iter::once(in_dim)
            .chain(self.hidden_dims.iter().copied())
            .chain(std::iter::once(self.embed_dim))
            .collect()
    }
}

/// `base_lr / lr_factor^(number of boundaries <= epoch)`.
pub fn lr_at(config: &TrainerConfig, epoch: usize) -> f64 {
    config.lr_at(epoch)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxEpochs,
    EarlyStopped,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss.
    pub model: EmbeddingModel,
    pub log: Vec<TrainLogRow>,
    pub stop_reason: StopReason,
    pub best_epoch: usize,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

/// Seeded shuffle, then the first `round(n * fraction)` samples train.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((n as f64 * fraction).round() as usize).min(n);
    let val = order.split_off(cut);
    (order, val)
}

fn has_pairs_and_negatives(labels: &[i32]) -> bool {
    let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    counts.len() >= 2 && counts.values().any(|&c| c >= 2)
}

/// Draws class-balanced batches: each holds up to `batch_size / samples_per_class`
/// classes, led by a class with at least two samples, so every batch has an
/// anchor-positive pair and a negative.
struct BatchSampler {
    by_class: Vec<Vec<usize>>,
    classes_per_batch: usize,
    samples_per_class: usize,
}

impl BatchSampler {
    fn new(labels: &[i32], indices: &[usize], config: &TrainerConfig) -> Self {
        let mut map: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for &i in indices {
            map.entry(labels[i]).or_default().push(i);
        }
        let by_class: Vec<Vec<usize>> = map.into_values().collect();
        let classes_per_batch = (config.batch_size / config.samples_per_class)
            .clamp(2, by_class.len().max(2));
        Self {
            by_class,
            classes_per_batch,
            samples_per_class: config.samples_per_class,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let eligible: Vec<usize> = (0..self.by_class.len())
            .filter(|&c| self.by_class[c].len() >= 2)
            .collect();
        let lead = *eligible.choose(rng).expect("checked before training");
        let mut others: Vec<usize> = (0..self.by_class.len()).filter(|&c| c != lead).collect();
        others.shuffle(rng);
        others.truncate(self.classes_per_batch - 1);
        let mut batch = Vec::new();
        for c in std::iter::once(lead).chain(others) {
            batch.extend(self.by_class[c].choose_multiple(rng, self.samples_per_class).copied());
        }
        batch
    }
}

pub fn train(dataset: &Dataset, config: &TrainerConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if !has_pairs_and_negatives(&dataset.labels) {
        return Err(Error::InsufficientClasses);
    }
    let (train_idx, val_idx) = split_indices(dataset.len(), config.split_fraction, config.seed);
    let train_labels: Vec<i32> = train_idx.iter().map(|&i| dataset.labels[i]).collect();
    if !has_pairs_and_negatives(&train_labels) {
        return Err(Error::InsufficientClasses);
    }
    let val = dataset.subset(&val_idx);
    if !has_pairs_and_negatives(&val.labels) {
        return Err(Error::InsufficientData(
            "validation split needs two classes and one repeated class".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut model = EmbeddingModel::new_random(&config.layer_dims(dataset.dim()), config.seed)?;
    let mut optimizer = SgdMomentum::new(&model, config.momentum);
    let sampler = BatchSampler::new(&dataset.labels, &train_idx, config);
    let steps_per_epoch = train_idx.len().div_ceil(config.batch_size).max(1);

    let start = Instant::now();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, EmbeddingModel)> = None;
    let mut stale_epochs = 0;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 0..config.max_epochs {
        let lr = config.lr_at(epoch);
        let mut epoch_loss = 0.0;
        for _ in 0..steps_per_epoch {
            let batch = dataset.subset(&sampler.sample(&mut rng));
            let (loss, grads) = loss_gradient(&model, &batch.features, &batch.labels, config.margin)?;
            optimizer.step(&mut model, &grads, lr)?;
            epoch_loss += loss;
        }
        let train_loss = epoch_loss / steps_per_epoch as f64;
        let val_loss = batch_loss(&model, &val.features, &val.labels, config.margin)?;
        if !val_loss.is_finite() || !train_loss.is_finite() {
            return Err(Error::NonFinite);
        }
        log.push(TrainLogRow {
            epoch,
            train_loss,
            val_loss,
            lr,
            wall_seconds: if config.record_wall_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        });

        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, model.clone()));
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= config.patience {
                stop_reason = StopReason::EarlyStopped;
                break;
            }
        }
    }

    let (_, best_epoch, best_model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model: best_model,
        log,
        stop_reason,
        best_epoch,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}

pub const LOG_HEADER: &str = "epoch,train_loss,val_loss,lr,wall_seconds";

pub fn write_log_csv<W: Write>(rows: &[TrainLogRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{LOG_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.3}",
            r.epoch, r.train_loss, r.val_loss, r.lr, r.wall_seconds
        )?;
    }
    Ok(())
}
