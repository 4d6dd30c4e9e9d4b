//! Mini-batch training with plateau learning-rate reduction, early stopping
//! on validation accuracy, best-epoch snapshots, and WA/UA evaluation.

use std::io::{self, Write};
use std::path::Path;

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::variant_seed;
use crate::features::Standardizer;
use crate::nn::model::{argmax_rows, update_moving_statistics};
use crate::nn::{Adam, Mode, ModelSpec, NnError, ParamStore, Tensor, backward, cross_entropy, forward, predict};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged in epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub early_stop_patience: usize,
    /// Smallest validation-accuracy gain that counts as an improvement.
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.001,
            batch_size: 64,
            max_epochs: 100,
            plateau_factor: 0.5,
            plateau_patience: 5,
            min_lr: 1e-6,
            early_stop_patience: 10,
            min_delta: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::BadConfig(m.into()));
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must lie in (0, 1)");
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be at least 1");
        }
        if !(self.lr0 > 0.0) || !(self.min_lr >= 0.0) || self.min_lr > self.lr0 {
            return bad("need 0 <= min_lr <= lr0 and lr0 > 0");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if !(self.min_delta >= 0.0) {
            return bad("min_delta must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.and_then(|e| self.records.get(e))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr"])?;
        for r in &self.records {
            csv.write_record([
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.train_acc.to_string(),
                r.val_loss.to_string(),
                r.val_acc.to_string(),
                r.lr.to_string(),
            ])?;
        }
        csv.flush()
    }

    pub fn save_csv(&self, path: &Path) -> io::Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Halves (by `factor`) the learning rate once the monitored value has not
/// improved for `patience` consecutive epochs, then restarts the count.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    min_lr: f64,
    min_delta: f64,
    best: f64,
    wait: usize,
}

impl PlateauScheduler {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.lr0,
            factor: cfg.plateau_factor,
            patience: cfg.plateau_patience,
            min_lr: cfg.min_lr,
            min_delta: cfg.min_delta,
            best: f64::NEG_INFINITY,
            wait: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one epoch's monitored value and returns the rate for the next
    /// epoch.
    pub fn step(&mut self, value: f64) -> f64 {
        if value > self.best + self.min_delta {
            self.best = value;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.wait = 0;
            }
        }
        self.lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Tracks the best epoch and signals a stop after `patience` epochs without
/// improvement. Ties keep the earlier epoch.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    best_epoch: Option<usize>,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            patience: cfg.early_stop_patience,
            min_delta: cfg.min_delta,
            best: f64::NEG_INFINITY,
            best_epoch: None,
            wait: 0,
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    /// Returns whether `epoch` is the new best, and whether to stop.
    pub fn update(&mut self, epoch: usize, value: f64) -> (bool, StopDecision) {
        let improved = value > self.best + self.min_delta;
        if improved {
            self.best = value;
            self.best_epoch = Some(epoch);
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        let decision = if self.wait >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        };
        (improved, decision)
    }
}

/// Learning rate for the epoch following `history`, replaying the plateau
/// rule over its validation accuracies.
pub fn lr_schedule_step(history: &TrainHistory, cfg: &TrainConfig) -> f64 {
    let mut sched = PlateauScheduler::new(cfg);
    for r in &history.records {
        sched.step(r.val_acc);
    }
    sched.lr()
}

/// Whether training should stop after the last epoch in `history`.
pub fn early_stop_check(history: &TrainHistory, cfg: &TrainConfig) -> StopDecision {
    let mut stop = EarlyStopping::new(cfg);
    let mut decision = StopDecision::Continue;
    for r in &history.records {
        decision = stop.update(r.epoch, r.val_acc).1;
    }
    decision
}

/// Row-major feature matrix with integer labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub rows: Vec<f32>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: &[f32], label: usize) {
        assert_eq!(row.len(), self.dim, "row width");
        self.rows.extend_from_slice(row);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn standardized(&self, st: &Standardizer) -> Self {
        let mut out = Self::new(self.dim);
        for i in 0..self.len() {
            out.push(&st.apply(self.row(i)), self.labels[i]);
        }
        out
    }

    /// Input tensor shaped for `spec` from the rows at `indices`.
    pub fn batch(&self, spec: &ModelSpec, indices: &[usize]) -> Result<Tensor<f32>, NnError> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Tensor::from_vec(&spec.input.with_batch(indices.len()), data)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best epoch.
    pub params: ParamStore<f32>,
    pub history: TrainHistory,
}

/// Trains `params` and returns the best-epoch snapshot. Without validation
/// data the training accuracy is monitored instead. `on_epoch` sees every
/// finished epoch together with the parameters at its end.
pub fn train(
    spec: &ModelSpec,
    params: ParamStore<f32>,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &ParamStore<f32>),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    params.check_against(spec)?;
    let mut params = params;
    let mut best = params.clone();
    let mut adam = Adam::new(spec, cfg.lr0)?;
    let mut sched = PlateauScheduler::new(cfg);
    let mut stopper = EarlyStopping::new(cfg);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut bn_updates = 0u64;

    for epoch in 0..cfg.max_epochs {
        let lr = sched.lr();
        adam.lr = lr;
        let epoch_seed = variant_seed(cfg.seed, epoch);
        let mut shuffle_rng = SplitMix64::seed_from_u64(epoch_seed);
        let mut dropout_rng = SplitMix64::seed_from_u64(epoch_seed ^ 0x5eed_d20f);
        order.shuffle(&mut shuffle_rng);

        let diverged = |reason: String| TrainError::Diverged { epoch, reason };
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            let x = train_set.batch(spec, idx)?;
            let labels: Vec<usize> = idx.iter().map(|&i| train_set.labels[i]).collect();
            let (probs, cache) = forward(spec, &params, &x, Mode::Train, &mut dropout_rng).map_err(|e| match e {
                NnError::NonFiniteActivation { .. } => diverged(e.to_string()),
                other => TrainError::Model(other),
            })?;
            let loss = cross_entropy(&probs, &labels);
            if !loss.is_finite() {
                return Err(diverged("non-finite loss".into()));
            }
            loss_sum += loss * idx.len() as f64;
            correct += argmax_rows(&probs).iter().zip(&labels).filter(|(p, l)| p == l).count();
            let grads = backward(spec, &params, &cache, &labels)?;
            if !grads.is_finite() {
                return Err(diverged("non-finite gradient".into()));
            }
            bn_updates += 1;
            update_moving_statistics(spec, &mut params, &cache, bn_updates);
            adam.step(&mut params, &grads);
        }
        let n = train_set.len() as f64;
        let (train_loss, train_acc) = (loss_sum / n, correct as f64 / n);

        let (val_loss, val_acc) = if val_set.is_empty() {
            (train_loss, train_acc)
        } else {
            let (loss, preds) = infer_dataset(spec, &params, val_set, cfg.batch_size).map_err(|e| match e {
                NnError::NonFiniteActivation { .. } => diverged(e.to_string()),
                other => TrainError::Model(other),
            })?;
            let hits = preds.iter().zip(&val_set.labels).filter(|(p, l)| p == l).count();
            (loss, hits as f64 / val_set.len() as f64)
        };

        let record = EpochRecord {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
            lr,
        };
        history.records.push(record);
        on_epoch(&record, &params);

        let (improved, decision) = stopper.update(epoch, val_acc);
        if improved {
            best.clone_from(&params);
            history.best_epoch = Some(epoch);
        }
        sched.step(val_acc);
        if decision == StopDecision::Stop {
            break;
        }
    }
    if history.best_epoch.is_none() {
        // every epoch scored -inf-equivalent; keep the first
        history.best_epoch = Some(0);
    }
    Ok(TrainOutcome { params: best, history })
}

/// Mean loss and argmax predictions in infer mode.
fn infer_dataset(
    spec: &ModelSpec,
    params: &ParamStore<f32>,
    data: &Dataset,
    batch_size: usize,
) -> Result<(f64, Vec<usize>), NnError> {
    let mut loss_sum = 0.0;
    let mut preds = Vec::with_capacity(data.len());
    let all: Vec<usize> = (0..data.len()).collect();
    for idx in all.chunks(batch_size.max(1)) {
        let probs = predict(spec, params, &data.batch(spec, idx)?)?;
        let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
        loss_sum += cross_entropy(&probs, &labels) * idx.len() as f64;
        preds.extend(argmax_rows(&probs));
    }
    Ok((loss_sum / data.len().max(1) as f64, preds))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<u64>>,
    pub weighted_accuracy: f64,
    pub unweighted_accuracy: f64,
    /// Recall per class; 0 for classes without support.
    pub per_class_recall: Vec<f64>,
    pub support: Vec<u64>,
}

impl EvalReport {
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self, TrainError> {
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(TrainError::EmptyDataset);
        }
        let support: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
        let trace: u64 = (0..confusion.len()).map(|i| confusion[i][i]).sum();
        let per_class_recall: Vec<f64> = confusion
            .iter()
            .enumerate()
            .map(|(i, r)| if support[i] > 0 { r[i] as f64 / support[i] as f64 } else { 0.0 })
            .collect();
        let supported: Vec<f64> = per_class_recall
            .iter()
            .zip(&support)
            .filter(|(_, s)| **s > 0)
            .map(|(r, _)| *r)
            .collect();
        Ok(Self {
            weighted_accuracy: trace as f64 / total as f64,
            unweighted_accuracy: supported.iter().sum::<f64>() / supported.len() as f64,
            per_class_recall,
            support,
            confusion,
        })
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self, TrainError> {
        let mut confusion = vec![vec![0u64; classes]; classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        Self::from_confusion(confusion)
    }

    pub fn summary_line(&self) -> String {
        format!("wa={:.6} ua={:.6}", self.weighted_accuracy, self.unweighted_accuracy)
    }

    /// Confusion matrix with class-name header row and column.
    pub fn write_confusion_csv<W: Write>(&self, w: W, names: &[&str]) -> io::Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec![String::new()];
        header.extend(names.iter().map(|n| n.to_string()));
        csv.write_record(&header)?;
        for (name, row) in names.iter().zip(&self.confusion) {
            let mut rec = vec![name.to_string()];
            rec.extend(row.iter().map(u64::to_string));
            csv.write_record(&rec)?;
        }
        csv.flush()
    }
}

/// Infer-mode evaluation over a whole dataset.
pub fn evaluate(spec: &ModelSpec, params: &ParamStore<f32>, data: &Dataset) -> Result<EvalReport, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let (_, preds) = infer_dataset(spec, params, data, 64)?;
    EvalReport::from_predictions(&data.labels, &preds, spec.output_classes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Architecture, FeatureShape, Layer};

    fn history(vals: &[f64]) -> TrainHistory {
        TrainHistory {
            records: vals
                .iter()
                .enumerate()
                .map(|(epoch, &val_acc)| EpochRecord {
                    epoch,
                    train_loss: 0.0,
                    train_acc: 0.0,
                    val_loss: 0.0,
                    val_acc,
                    lr: 0.0,
                })
                .collect(),
            best_epoch: None,
        }
    }

    #[test]
    fn improving_keeps_lr_and_continues() {
        let cfg = TrainConfig::default();
        let h = history(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.96, 0.97]);
        assert_eq!(lr_schedule_step(&h, &cfg), 0.001);
        assert_eq!(early_stop_check(&h, &cfg), StopDecision::Continue);
    }

    #[test]
    fn plateau_cuts_step_by_step() {
        let cfg = TrainConfig {
            early_stop_patience: 1000,
            ..TrainConfig::default()
        };
        // epoch 0 sets the baseline, then k stagnant epochs follow
        let mut sched = PlateauScheduler::new(&cfg);
        sched.step(0.5);
        let mut lrs = Vec::new();
        for _ in 0..25 {
            lrs.push(sched.step(0.5));
        }
        assert_eq!(lrs[3], 0.001);
        assert_eq!(lrs[4], 0.0005);
        assert_eq!(lrs[9], 0.00025);
        assert_eq!(lrs[24], 3.125e-5);

        // jitter below min_delta is not an improvement
        let mut sched = PlateauScheduler::new(&cfg);
        for v in [0.5, 0.50005, 0.5, 0.50009, 0.5, 0.5] {
            sched.step(v);
        }
        assert_eq!(sched.lr(), 0.0005);
    }

    #[test]
    fn lr_floor() {
        let cfg = TrainConfig {
            min_lr: 4e-4,
            ..TrainConfig::default()
        };
        let mut sched = PlateauScheduler::new(&cfg);
        for _ in 0..40 {
            sched.step(0.0);
        }
        assert_eq!(sched.lr(), 4e-4);
    }

    #[test]
    fn early_stop_after_peak() {
        let cfg = TrainConfig::default();
        let mut vals = vec![0.2, 0.4, 0.6, 0.7];
        vals.extend(std::iter::repeat_n(0.65, 10));
        let mut stopper = EarlyStopping::new(&cfg);
        let mut stop_at = None;
        for (e, &v) in vals.iter().enumerate() {
            if stopper.update(e, v).1 == StopDecision::Stop {
                stop_at = Some(e);
                break;
            }
        }
        assert_eq!(stopper.best_epoch(), Some(3));
        assert_eq!(stop_at, Some(3 + 10));
        assert_eq!(early_stop_check(&history(&vals[..13]), &cfg), StopDecision::Continue);
        assert_eq!(early_stop_check(&history(&vals), &cfg), StopDecision::Stop);
    }

    #[test]
    fn ties_keep_earliest() {
        let cfg = TrainConfig::default();
        let mut stopper = EarlyStopping::new(&cfg);
        for (e, v) in [0.5, 0.7, 0.7, 0.7].into_iter().enumerate() {
            stopper.update(e, v);
        }
        assert_eq!(stopper.best_epoch(), Some(1));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for cfg in [
            TrainConfig {
                plateau_factor: 1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                plateau_patience: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
        ] {
            assert!(matches!(cfg.validate(), Err(TrainError::BadConfig(_))));
        }
    }

    #[test]
    fn metrics_on_hand_matrices() {
        let r = EvalReport::from_confusion(vec![vec![8, 2], vec![4, 6]]).unwrap();
        assert!((r.weighted_accuracy - 0.7).abs() < 1e-12);
        assert!((r.unweighted_accuracy - 0.7).abs() < 1e-12);
        let r = EvalReport::from_confusion(vec![vec![9, 1], vec![8, 2]]).unwrap();
        assert!((r.weighted_accuracy - 0.55).abs() < 1e-12);
        assert!((r.unweighted_accuracy - 0.55).abs() < 1e-12);
        let r = EvalReport::from_confusion(vec![vec![18, 2], vec![4, 6]]).unwrap();
        assert!((r.weighted_accuracy - 0.8).abs() < 1e-12);
        assert!((r.unweighted_accuracy - 0.75).abs() < 1e-12);

        let truth: Vec<usize> = (0..7).flat_map(|c| std::iter::repeat_n(c, 5)).collect();
        let r = EvalReport::from_predictions(&truth, &vec![0; 35], 7).unwrap();
        assert!((r.weighted_accuracy - 1.0 / 7.0).abs() < 1e-12);
        assert!((r.unweighted_accuracy - 1.0 / 7.0).abs() < 1e-12);
        let r = EvalReport::from_predictions(&truth, &truth, 7).unwrap();
        assert_eq!((r.weighted_accuracy, r.unweighted_accuracy), (1.0, 1.0));
        assert!((0..7).all(|i| r.confusion[i][i] == 5));

        // classes without support are left out of UA
        let r = EvalReport::from_predictions(&[0, 0, 2], &[0, 1, 2], 3).unwrap();
        assert!((r.unweighted_accuracy - 0.75).abs() < 1e-12);
        assert!(EvalReport::from_predictions(&[], &[], 3).is_err());
    }

    #[test]
    fn csv_exports() {
        let r = EvalReport::from_confusion(vec![vec![1, 0], vec![2, 3]]).unwrap();
        let mut buf = Vec::new();
        r.write_confusion_csv(&mut buf, &["a", "b"]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), ",a,b\na,1,0\nb,2,3\n");
        assert_eq!(r.summary_line(), "wa=0.666667 ua=0.800000");

        let mut h = history(&[0.5]);
        h.records[0].lr = 0.001;
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,train_loss,train_acc,val_loss,val_acc,lr\n0,0,0,0,0.5,0.001\n"
        );
    }

    fn tiny_problem() -> (ModelSpec, Dataset) {
        let spec = ModelSpec::new(
            FeatureShape::Seq { len: 8, channels: 1 },
            vec![
                Layer::Conv1D {
                    filters: 4,
                    kernel: 3,
                    activation: Activation::Relu,
                },
                Layer::Lstm {
                    units: 6,
                    return_sequences: false,
                },
                Layer::Dense {
                    units: 3,
                    activation: Activation::Softmax,
                },
            ],
            Activation::Relu,
        )
        .unwrap();
        let mut data = Dataset::new(8);
        let mut rng = SplitMix64::seed_from_u64(4);
        for i in 0..60 {
            let c = i % 3;
            let row: Vec<f32> = (0..8)
                .map(|t| {
                    let base = match c {
                        0 => 1.0,
                        1 => -1.0,
                        _ => if t % 2 == 0 { 1.0 } else { -1.0 },
                    };
                    base + rand::Rng::gen_range(&mut rng, -0.2..0.2)
                })
                .collect();
            data.push(&row, c);
        }
        (spec, data)
    }

    #[test]
    fn learns_tiny_problem_and_returns_best_snapshot() {
        let (spec, data) = tiny_problem();
        let params = ParamStore::init(&spec, 1).unwrap();
        let cfg = TrainConfig {
            lr0: 0.02,
            batch_size: 16,
            max_epochs: 60,
            ..TrainConfig::default()
        };
        let mut seen = 0;
        let out = train(&spec, params, &data, &data, &cfg, |_, _| seen += 1).unwrap();
        assert_eq!(seen, out.history.len());
        let best = out.history.best().unwrap();
        assert!(best.val_acc >= 0.95, "{best:?}");
        let report = evaluate(&spec, &out.params, &data).unwrap();
        assert!((report.weighted_accuracy - best.val_acc).abs() < 1e-12);
        let lrs: Vec<f64> = out.history.records.iter().map(|r| r.lr).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn deterministic_and_degenerate_runs() {
        let (spec, data) = tiny_problem();
        let cfg = TrainConfig {
            batch_size: 64,
            max_epochs: 1,
            ..TrainConfig::default()
        };
        let run = || train(&spec, ParamStore::init(&spec, 2).unwrap(), &data, &data, &cfg, |_, _| {}).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
        assert_eq!(a.history.len(), 1);
        assert_eq!(a.history.best_epoch, Some(0));

        let empty = Dataset::new(8);
        assert!(matches!(
            train(&spec, ParamStore::init(&spec, 2).unwrap(), &empty, &data, &cfg, |_, _| {}),
            Err(TrainError::EmptyDataset)
        ));
        assert!(matches!(evaluate(&spec, &ParamStore::init(&spec, 2).unwrap(), &empty), Err(TrainError::EmptyDataset)));
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let (spec, data) = tiny_problem();
        let mut params = ParamStore::<f32>::init(&spec, 2).unwrap();
        params.layers[0][0].fill(f32::MAX);
        let err = train(&spec, params, &data, &data, &TrainConfig::default(), |_, _| {}).unwrap_err();
        assert!(matches!(err, TrainError::Diverged { epoch: 0, .. }), "{err}");
    }

    #[test]
    fn reduced_architecture_builds() {
        let spec = ModelSpec::from_architecture(&Architecture::reduced(Activation::Relu)).unwrap();
        assert_eq!(spec.output_classes(), 7);
    }
}
