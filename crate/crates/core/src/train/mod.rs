//! Training orchestration: epochs, batching, the plateau learning-rate
//! schedule, and best-model selection.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{class_weights, ClassWeights, Dataset, DatasetError};
use crate::nn::{
    adam_step, global_grad_norm, scale_gradients, weighted_ce, AdamHyper, AdamState, Mode,
    ModelConfig, ModelParams, NnError,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint version {found} not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Learning-rate schedule: halve on validation plateau (default), or a pure
/// per-epoch exponential decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Plateau,
    Exponential { gamma: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub weight_decay: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub schedule: LrSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 40,
            batch_size: 32,
            lr0: 9.23e-4,
            weight_decay: 8.21e-6,
            plateau_factor: 0.5,
            plateau_patience: 5,
            min_delta: 1e-4,
            seed: 0,
            clip_norm: Some(5.0),
            schedule: LrSchedule::Plateau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Learning rate in effect after this epoch's schedule update.
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc,lr\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc, e.lr
            ));
        }
        out
    }
}

/// Halve the learning rate after `patience` consecutive epochs without the
/// validation loss improving by at least `min_delta`.
#[derive(Debug, Clone)]
pub struct PlateauSchedule {
    pub lr: f64,
    factor: f64,
    patience: usize,
    min_delta: f64,
    best: f64,
    stale: usize,
}

impl PlateauSchedule {
    pub fn new(lr0: f64, factor: f64, patience: usize, min_delta: f64) -> Self {
        Self { lr: lr0, factor, patience, min_delta, best: f64::INFINITY, stale: 0 }
    }

    /// Feed one epoch's validation loss; returns the lr now in effect.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                self.lr *= self.factor;
                self.stale = 0;
            }
        }
        self.lr
    }
}

fn check_dataset(dataset: &Dataset, cfg: &ModelConfig) -> Result<(), TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for w in &dataset.windows {
        if w.t_steps != cfg.seq_len || w.channels != cfg.input_channels {
            return Err(TrainError::ShapeMismatch(format!(
                "window {}x{} does not fit model {}x{}",
                w.t_steps, w.channels, cfg.seq_len, cfg.input_channels
            )));
        }
        if w.label >= cfg.num_classes {
            return Err(TrainError::ShapeMismatch(format!(
                "label {} out of range for {} classes",
                w.label, cfg.num_classes
            )));
        }
    }
    Ok(())
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Train from a fresh seeded initialization; returns the parameters with the
/// best validation accuracy (ties go to the later epoch) and the full
/// per-epoch history.
pub fn train(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
) -> Result<(ModelParams, TrainHistory), TrainError> {
    model_cfg.validate()?;
    check_dataset(train_set, model_cfg)?;
    check_dataset(val_set, model_cfg)?;
    if model_cfg.num_classes != train_set.class_count {
        return Err(TrainError::ShapeMismatch(format!(
            "model has {} classes, dataset {}",
            model_cfg.num_classes, train_set.class_count
        )));
    }

    let weights = class_weights(train_set)?;
    let mut params = ModelParams::init(model_cfg, train_cfg.seed);
    let mut state = AdamState::new(
        &params,
        AdamHyper { lr: train_cfg.lr0, weight_decay: train_cfg.weight_decay, ..AdamHyper::default() },
    );
    let mut schedule = PlateauSchedule::new(
        train_cfg.lr0,
        train_cfg.plateau_factor,
        train_cfg.plateau_patience,
        train_cfg.min_delta,
    );
    let mut shuffle_rng = ChaCha20Rng::seed_from_u64(train_cfg.seed);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, usize, ModelParams)> = None;

    let n = train_set.len();
    let mut indices: Vec<usize> = (0..n).collect();
    for epoch in 1..=train_cfg.max_epochs {
        indices.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0usize;
        for (batch_idx, chunk) in indices.chunks(train_cfg.batch_size).enumerate() {
            let batch: Vec<(&[f64], usize)> = chunk
                .iter()
                .map(|&i| {
                    let w = &train_set.windows[i];
                    (w.values.as_slice(), w.label)
                })
                .collect();
            let seed = splitmix64(
                train_cfg.seed ^ (epoch as u64).rotate_left(32) ^ batch_idx as u64,
            );
            let stats =
                crate::nn::backward_detailed(&batch, &params, &weights, Mode::Train { seed })?;
            let mut grads = stats.grads;
            if let Some(max_norm) = train_cfg.clip_norm {
                let norm = global_grad_norm(&grads);
                if norm > max_norm {
                    scale_gradients(&mut grads, max_norm / norm);
                }
            }
            state.hyper.lr = schedule.lr;
            adam_step(&mut params, &grads, &mut state)?;
            epoch_loss += stats.loss * batch.len() as f64;
            epoch_correct += stats.correct;
        }
        let train_loss = epoch_loss / n as f64;
        let train_acc = epoch_correct as f64 / n as f64;

        let eval = evaluate(&params, val_set)?;
        let lr = match train_cfg.schedule {
            LrSchedule::Plateau => schedule.step(eval.loss),
            LrSchedule::Exponential { gamma } => {
                schedule.lr = train_cfg.lr0 * gamma.powi(epoch as i32);
                schedule.lr
            }
        };
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            train_acc,
            val_loss: eval.loss,
            val_acc: eval.accuracy,
            lr,
        });
        let take = match &best {
            Some((acc, ..)) => eval.accuracy >= *acc,
            None => true,
        };
        if take {
            best = Some((eval.accuracy, epoch, params.clone()));
        }
    }

    let final_params = best.map(|(_, _, p)| p).unwrap_or(params);
    Ok((final_params, history))
}

/// One evaluated window: true label, argmax prediction, full distribution.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub label: usize,
    pub predicted: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Mean unweighted cross-entropy.
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<Prediction>,
}

/// Eval-mode forward over every window. Argmax ties resolve to the lowest
/// class index.
pub fn evaluate(params: &ModelParams, dataset: &Dataset) -> Result<Evaluation, TrainError> {
    check_dataset(dataset, &params.config)?;
    let uniform = ClassWeights::uniform(params.config.num_classes);
    let predictions: Vec<Prediction> = dataset
        .windows
        .par_iter()
        .map(|w| {
            let probs = crate::nn::classifier_forward(&w.values, params, Mode::Eval)
                .expect("shape already validated");
            let predicted = argmax(&probs);
            Prediction { label: w.label, predicted, probs }
        })
        .collect();
    let loss = predictions.iter().map(|p| weighted_ce(&p.probs, p.label, &uniform)).sum::<f64>()
        / predictions.len() as f64;
    let accuracy =
        predictions.iter().filter(|p| p.predicted == p.label).count() as f64 / predictions.len() as f64;
    Ok(Evaluation { loss, accuracy, predictions })
}

pub(crate) fn argmax(probs: &[f64]) -> usize {
    probs
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::build_dataset;
    use crate::signal::{generate_synthetic, SyntheticSubjectProfile};

    #[test]
    fn plateau_constant_loss_halves_at_six_and_eleven() {
        let mut s = PlateauSchedule::new(1.0, 0.5, 5, 1e-4);
        let mut lrs = Vec::new();
        for _ in 0..12 {
            lrs.push(s.step(0.7));
        }
        assert_eq!(lrs[..5], [1.0; 5]);
        assert_eq!(lrs[5], 0.5, "first halving at epoch 6");
        assert_eq!(lrs[6..10], [0.5; 4]);
        assert_eq!(lrs[10], 0.25, "second halving at epoch 11");
    }

    #[test]
    fn plateau_never_triggers_on_improving_loss() {
        let mut s = PlateauSchedule::new(1.0, 0.5, 5, 1e-4);
        for i in 0..30 {
            let lr = s.step(1.0 - 0.01 * i as f64);
            assert_eq!(lr, 1.0);
        }
    }

    fn toy_sets(seed: u64) -> (Dataset, Dataset) {
        // two subjects far apart in heart rate: trivially separable
        let mut records = Vec::new();
        for (i, hr) in [(0u64, 50.0), (1u64, 90.0)] {
            let mut p = SyntheticSubjectProfile::new(seed * 100 + i, hr);
            p.subject_id = format!("subject-{i}");
            p.channels.iter_mut().for_each(|c| c.noise_std = 0.02);
            records.push(generate_synthetic(&p, 120.0, 25.0).unwrap());
        }
        let ds = build_dataset(&records, 4.0, 0.5).unwrap();
        let (train, val, _) =
            crate::dataset::stratified_split(&ds, &crate::dataset::SplitSpec::new(0.6, 0.2, 0.2, seed))
                .unwrap();
        (train, val)
    }

    fn small_model(classes: usize) -> ModelConfig {
        ModelConfig::new(4, 100, classes).with_hidden(8).with_layers(1).with_dropout(0.1)
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let (train_set, val_set) = toy_sets(1);
        let cfg = small_model(2);
        let tc = TrainConfig { max_epochs: 0, seed: 7, ..TrainConfig::default() };
        let (params, history) = train(&cfg, &tc, &train_set, &val_set).unwrap();
        assert!(history.epochs.is_empty());
        assert_eq!(params, ModelParams::init(&cfg, 7));
    }

    #[test]
    fn separable_subjects_learn_below_ln2_quickly() {
        let (train_set, val_set) = toy_sets(2);
        let cfg = small_model(2);
        let tc = TrainConfig { max_epochs: 10, seed: 3, ..TrainConfig::default() };
        let (_, history) = train(&cfg, &tc, &train_set, &val_set).unwrap();
        let min_loss = history.epochs.iter().map(|e| e.train_loss).fold(f64::MAX, f64::min);
        assert!(
            min_loss < std::f64::consts::LN_2,
            "train loss never fell below ln 2: {min_loss}"
        );
    }

    #[test]
    fn fixed_seed_reproduces_history_and_params() {
        let (train_set, val_set) = toy_sets(3);
        let cfg = small_model(2);
        let tc = TrainConfig { max_epochs: 3, seed: 11, ..TrainConfig::default() };
        let (p1, h1) = train(&cfg, &tc, &train_set, &val_set).unwrap();
        let (p2, h2) = train(&cfg, &tc, &train_set, &val_set).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(p1, p2);
        // lr trace is non-increasing and changes only by the plateau factor
        for pair in h1.epochs.windows(2) {
            assert!(pair[1].lr <= pair[0].lr);
            assert!(pair[1].lr == pair[0].lr || (pair[1].lr - pair[0].lr * 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn returned_params_match_best_recorded_val_accuracy() {
        let (train_set, val_set) = toy_sets(4);
        let cfg = small_model(2);
        let tc = TrainConfig { max_epochs: 4, seed: 5, ..TrainConfig::default() };
        let (params, history) = train(&cfg, &tc, &train_set, &val_set).unwrap();
        let best = history.epochs.iter().map(|e| e.val_acc).fold(f64::MIN, f64::max);
        let eval = evaluate(&params, &val_set).unwrap();
        assert!((eval.accuracy - best).abs() < 1e-12);
    }

    #[test]
    fn evaluate_uniform_model_predicts_class_zero() {
        let (train_set, _) = toy_sets(5);
        let cfg = small_model(2);
        let mut params = ModelParams::init(&cfg, 1);
        params.w_c = crate::nn::Mat::zeros(2, 16);
        params.b_c = vec![0.0; 2];
        let eval = evaluate(&params, &train_set).unwrap();
        let zero_frac = train_set.windows.iter().filter(|w| w.label == 0).count() as f64
            / train_set.len() as f64;
        assert!(eval.predictions.iter().all(|p| p.predicted == 0));
        assert!((eval.accuracy - zero_frac).abs() < 1e-12);
    }

    #[test]
    fn evaluate_matches_manual_count() {
        let (train_set, _) = toy_sets(6);
        let cfg = small_model(2);
        let params = ModelParams::init(&cfg, 2);
        let subset = Dataset {
            windows: train_set.windows[..10].to_vec(),
            class_count: 2,
            label_names: train_set.label_names.clone(),
        };
        let eval = evaluate(&params, &subset).unwrap();
        let mut correct = 0;
        for w in &subset.windows {
            let probs = crate::nn::classifier_forward(&w.values, &params, Mode::Eval).unwrap();
            if argmax(&probs) == w.label {
                correct += 1;
            }
        }
        assert!((eval.accuracy - correct as f64 / 10.0).abs() < 1e-12);
    }
}
