//! Mini-batch training with early stopping, learning-rate reduction on
//! plateau, and grid search.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::models::{argmax, Model, ModelConfig, ModelKind};
use crate::ops::{self, Mode};
use crate::optim::{AdamConfig, AdamState};
use crate::tensor::Real;
use crate::{seed, N_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrSchedule {
    pub initial: f64,
    pub factor: f64,
    /// Stagnant epochs before each reduction.
    pub patience: usize,
    pub min: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            initial: 1e-3,
            factor: 0.5,
            patience: 5,
            min: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub dropout: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub learning_rate: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            dropout: vec![0.3, 0.4, 0.5],
            batch_size: vec![16, 32, 64],
            learning_rate: vec![1e-3, 3e-4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub dropout: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl GridPoint {
    fn cmp_lex(&self, other: &Self) -> Ordering {
        self.dropout
            .total_cmp(&other.dropout)
            .then(self.batch_size.cmp(&other.batch_size))
            .then(self.learning_rate.total_cmp(&other.learning_rate))
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dropout.is_empty() || self.batch_size.is_empty() || self.learning_rate.is_empty() {
            return Err(Error::Config("every grid axis needs at least one value".into()));
        }
        if self.dropout.iter().any(|d| !(0.0..1.0).contains(d))
            || self.batch_size.contains(&0)
            || self.learning_rate.iter().any(|l| !l.is_finite() || *l <= 0.0)
        {
            return Err(Error::Config("grid values out of range".into()));
        }
        Ok(())
    }

    /// Cartesian product in lexicographic (dropout, batch, lr) order.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &dropout in &self.dropout {
            for &batch_size in &self.batch_size {
                for &learning_rate in &self.learning_rate {
                    out.push(GridPoint {
                        dropout,
                        batch_size,
                        learning_rate,
                    });
                }
            }
        }
        out.sort_by(GridPoint::cmp_lex);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    pub lr: LrSchedule,
    /// Inverse-frequency class weights in the loss.
    pub class_weights: bool,
    pub grid: GridSpec,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 200,
            patience: 10,
            lr: LrSchedule::default(),
            class_weights: false,
            grid: GridSpec::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.lr.patience >= self.patience {
            return Err(Error::Config(format!(
                "lr reduce patience ({}) must be below early-stopping patience ({})",
                self.lr.patience, self.patience
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and max epochs must be positive".into()));
        }
        let lr = &self.lr;
        if !(lr.initial > 0.0 && lr.min > 0.0 && lr.min <= lr.initial && lr.factor > 0.0 && lr.factor < 1.0) {
            return Err(Error::Config(format!("invalid learning-rate schedule {lr:?}")));
        }
        if lr.patience == 0 {
            return Err(Error::Config("lr reduce patience must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Zero-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    /// Excluded from serialized reports so they stay reproducible.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl TrainReport {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }

    /// `epoch,train_loss,val_loss,train_acc,val_acc,learning_rate` rows.
    pub fn write_curves_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
        w.write_record(["epoch", "train_loss", "val_loss", "train_acc", "val_acc", "learning_rate"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                format!("{:?}", e.train_loss),
                format!("{:?}", e.val_loss),
                format!("{:?}", e.train_acc),
                format!("{:?}", e.val_acc),
                format!("{:?}", e.learning_rate),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))
    }
}

/// Outcome of one [`PlateauController::observe`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauDecision {
    pub improved: bool,
    pub stop: bool,
    /// Learning rate for the next epoch.
    pub learning_rate: f64,
}

/// Early stopping plus reduce-on-plateau, both driven by validation loss.
#[derive(Debug, Clone)]
pub struct PlateauController {
    patience: usize,
    schedule: LrSchedule,
    lr: f64,
    best: f64,
    best_epoch: Option<usize>,
    since_best: usize,
    since_reduce: usize,
}

impl PlateauController {
    pub fn new(patience: usize, schedule: LrSchedule) -> Self {
        PlateauController {
            patience,
            schedule,
            lr: schedule.initial,
            best: f64::INFINITY,
            best_epoch: None,
            since_best: 0,
            since_reduce: 0,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> PlateauDecision {
        let improved = val_loss < self.best;
        if improved {
            self.best = val_loss;
            self.best_epoch = Some(epoch);
            self.since_best = 0;
            self.since_reduce = 0;
        } else {
            self.since_best += 1;
            self.since_reduce += 1;
            if self.since_reduce >= self.schedule.patience {
                self.lr = (self.lr * self.schedule.factor).max(self.schedule.min);
                self.since_reduce = 0;
            }
        }
        PlateauDecision {
            improved,
            stop: self.since_best >= self.patience,
            learning_rate: self.lr,
        }
    }
}

/// What [`train`] needs from a model.
pub trait Trainable {
    type Snapshot;

    /// One pass over `order` in mini-batches. `rng_seed` drives dropout.
    fn fit_epoch(
        &mut self,
        data: &LabeledSet,
        order: &[usize],
        batch_size: usize,
        learning_rate: f64,
        rng_seed: u64,
    ) -> Result<EpochStats>;

    /// Evaluation-mode mean loss and accuracy.
    fn evaluate(&self, data: &LabeledSet) -> Result<EpochStats>;

    fn snapshot(&self) -> Self::Snapshot;

    fn restore(&mut self, snapshot: Self::Snapshot);
}

const EVAL_BATCH: usize = 64;

/// A [`Model`] paired with its optimizer state.
#[derive(Debug, Clone)]
pub struct ModelTrainer {
    pub model: Model,
    pub optimizer: AdamState,
    pub class_weights: Option<Vec<Real>>,
}

impl ModelTrainer {
    pub fn new(model: Model, learning_rate: f64) -> Self {
        ModelTrainer {
            model,
            optimizer: AdamState::new(AdamConfig {
                learning_rate,
                ..AdamConfig::default()
            }),
            class_weights: None,
        }
    }
}

/// `n / (classes * n_c)` per class; absent classes get weight 0.
pub fn inverse_frequency_weights(labels: &[usize]) -> Vec<Real> {
    let mut counts = [0usize; N_CLASSES];
    for &l in labels {
        counts[l] += 1;
    }
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                (labels.len() as f64 / (N_CLASSES * c) as f64) as Real
            }
        })
        .collect()
}

/// Evaluation-mode mean cross-entropy and accuracy of `model` on `data`.
pub fn evaluate_model(model: &Model, data: &LabeledSet) -> Result<EpochStats> {
    if data.is_empty() {
        return Err(Error::Insufficient("evaluation set is empty".into()));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut loss = 0.0;
    let mut correct = 0usize;
    for chunk in idx.chunks(EVAL_BATCH) {
        let probs = model.forward_probs(&data.batch(chunk))?;
        let labels = data.batch_labels(chunk);
        loss += ops::cross_entropy_loss(&probs, &labels)? as f64 * chunk.len() as f64;
        correct += probs
            .data()
            .chunks_exact(N_CLASSES)
            .zip(&labels)
            .filter(|(row, &l)| argmax(row) == l)
            .count();
    }
    Ok(EpochStats {
        loss: loss / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
    })
}

/// Evaluation-mode predicted labels for every sample of `data`.
pub fn predict_set(model: &Model, data: &LabeledSet) -> Result<Vec<usize>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in idx.chunks(EVAL_BATCH) {
        out.extend(model.predict(&data.batch(chunk))?.labels);
    }
    Ok(out)
}

impl Trainable for ModelTrainer {
    type Snapshot = Model;

    fn fit_epoch(
        &mut self,
        data: &LabeledSet,
        order: &[usize],
        batch_size: usize,
        learning_rate: f64,
        rng_seed: u64,
    ) -> Result<EpochStats> {
        let mut rng = seed::rng(rng_seed, &[]);
        self.optimizer.set_learning_rate(learning_rate);
        let mut loss = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(batch_size) {
            let x = data.batch(chunk);
            let labels = data.batch_labels(chunk);
            let node = self
                .model
                .forward_loss(&x, &labels, Mode::Train, &mut rng, self.class_weights.as_deref())?;
            if !node.value.is_finite() {
                return Err(Error::NonFinite("training loss".into()));
            }
            self.model.backward(&node)?;
            self.optimizer.step(self.model.parameters_mut())?;
            loss += node.value as f64 * chunk.len() as f64;
            correct += node
                .probs
                .data()
                .chunks_exact(N_CLASSES)
                .zip(&labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
        }
        Ok(EpochStats {
            loss: loss / order.len() as f64,
            accuracy: correct as f64 / order.len() as f64,
        })
    }

    fn evaluate(&self, data: &LabeledSet) -> Result<EpochStats> {
        evaluate_model(&self.model, data)
    }

    fn snapshot(&self) -> Model {
        self.model.clone()
    }

    fn restore(&mut self, snapshot: Model) {
        self.model = snapshot;
    }
}

/// Trains until validation loss stalls for `config.patience` epochs (or
/// `max_epochs`), then restores the best-validation-loss weights.
pub fn train<T: Trainable>(
    model: &mut T,
    train_set: &LabeledSet,
    val_set: &LabeledSet,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Insufficient("training and validation sets must be non-empty".into()));
    }
    let started = std::time::Instant::now();
    let mut controller = PlateauController::new(config.patience, config.lr);
    let mut best = None;
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.max_epochs {
        let lr = controller.learning_rate();
        order.sort_unstable();
        order.shuffle(&mut seed::rng(config.seed, &[seed::hash_str("shuffle"), epoch as u64]));
        let dropout_seed = seed::derive(config.seed, &[seed::hash_str("dropout"), epoch as u64]);
        let tr = model.fit_epoch(train_set, &order, config.batch_size, lr, dropout_seed)?;
        let va = model.evaluate(val_set)?;
        if !va.loss.is_finite() {
            return Err(Error::NonFinite("validation loss".into()));
        }
        log::info!(
            "epoch {epoch}: train loss {:.4} acc {:.3}, val loss {:.4} acc {:.3}, lr {lr:.2e}",
            tr.loss,
            tr.accuracy,
            va.loss,
            va.accuracy
        );
        epochs.push(EpochRecord {
            epoch,
            train_loss: tr.loss,
            val_loss: va.loss,
            train_acc: tr.accuracy,
            val_acc: va.accuracy,
            learning_rate: lr,
        });
        let decision = controller.observe(epoch, va.loss);
        if decision.improved {
            best = Some(model.snapshot());
        }
        if decision.stop {
            stopped_early = true;
            break;
        }
    }
    if let Some(s) = best {
        model.restore(s);
    }
    let best_epoch = controller.best_epoch().expect("at least one finite epoch");
    Ok(TrainReport {
        epochs,
        best_epoch,
        best_val_loss: controller.best_loss(),
        stopped_early,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// Builds a model from `config`, trains it and returns it with its report.
pub fn train_model(
    model_config: ModelConfig,
    train_set: &LabeledSet,
    val_set: &LabeledSet,
    config: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    let mut trainer = ModelTrainer::new(Model::build(model_config)?, config.lr.initial);
    if config.class_weights {
        trainer.class_weights = Some(inverse_frequency_weights(&train_set.labels));
    }
    let report = train(&mut trainer, train_set, val_set, config)?;
    Ok((trainer.model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub point: GridPoint,
    pub val_acc: f64,
    pub val_loss: f64,
    pub best_epoch: usize,
}

fn rank(a: &LeaderboardEntry, b: &LeaderboardEntry) -> Ordering {
    b.val_acc
        .total_cmp(&a.val_acc)
        .then(a.val_loss.total_cmp(&b.val_loss))
        .then(a.point.cmp_lex(&b.point))
}

/// Evaluates every grid point with `run` and ranks by validation accuracy,
/// then lower validation loss, then lexicographic point order.
pub fn grid_search_with<F>(grid: &GridSpec, mut run: F) -> Result<Vec<LeaderboardEntry>>
where
    F: FnMut(&GridPoint) -> Result<LeaderboardEntry>,
{
    grid.validate()?;
    let mut board = grid.points().iter().map(&mut run).collect::<Result<Vec<_>>>()?;
    board.sort_by(rank);
    Ok(board)
}

/// Trains one model per grid point and returns the winner with the leaderboard.
pub fn grid_search(
    kind: ModelKind,
    model_seed: u64,
    base: &TrainConfig,
    train_set: &LabeledSet,
    val_set: &LabeledSet,
) -> Result<(Model, TrainReport, Vec<LeaderboardEntry>)> {
    let mut best: Option<(LeaderboardEntry, Model, TrainReport)> = None;
    let board = grid_search_with(&base.grid, |p| {
        let cfg = TrainConfig {
            batch_size: p.batch_size,
            lr: LrSchedule {
                initial: p.learning_rate,
                min: base.lr.min.min(p.learning_rate),
                ..base.lr
            },
            ..base.clone()
        };
        let mc = ModelConfig::new(kind, model_seed)
            .with_input(train_set.seq_len, train_set.channels)
            .with_dropout(p.dropout);
        let (model, report) = train_model(mc, train_set, val_set, &cfg)?;
        let b = report.best();
        let entry = LeaderboardEntry {
            point: *p,
            val_acc: b.val_acc,
            val_loss: b.val_loss,
            best_epoch: report.best_epoch,
        };
        if best.as_ref().is_none_or(|(e, _, _)| rank(&entry, e) == Ordering::Less) {
            best = Some((entry.clone(), model, report));
        }
        Ok(entry)
    })?;
    let (_, model, report) = best.expect("grid is non-empty");
    Ok((model, report, board))
}
