//! Grouped permutation importance: replace one network's channels with
//! Gaussian noise and measure the drop in accuracy and per-class F1.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{network_name, LabeledSet, NetworkGrouping, Task};
use crate::error::{Error, Result};
use crate::metrics::confusion;
use crate::models::Classifier;
use crate::tensor::{Real, Tensor};
use crate::{seed, N_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub mean: f64,
    /// 1.0 puts about 95% of draws in [-2, 2].
    pub std: f64,
    pub seed: u64,
    pub repeats: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            mean: 0.0,
            std: 1.0,
            seed: 0,
            repeats: 5,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("importance repeats must be at least 1".into()));
        }
        if !(self.std.is_finite() && self.std > 0.0 && self.mean.is_finite()) {
            return Err(Error::Config(format!("invalid noise mean/std {} / {}", self.mean, self.std)));
        }
        Ok(())
    }

    /// Seed of the (network, repeat) cell.
    pub fn cell_seed(&self, network: usize, repeat: usize) -> u64 {
        seed::derive(self.seed, &[network as u64, repeat as u64])
    }
}

/// Replaces the listed channels of a `[batch, time, channel]` tensor with
/// i.i.d. noise; every other value is copied unchanged.
pub fn permute_group<R: Rng + ?Sized>(batch: &Tensor, group: &[usize], noise: &NoiseSpec, rng: &mut R) -> Result<Tensor> {
    let c = match *batch.shape() {
        [_, _, c] => c,
        _ => return Err(Error::shape("permute_group", "rank", 3, batch.shape().len())),
    };
    let mut seen = vec![false; c];
    for &ch in group {
        if ch >= c {
            return Err(Error::InvalidArgument(format!("channel {ch} out of range for {c} channels")));
        }
        if std::mem::replace(&mut seen[ch], true) {
            return Err(Error::InvalidArgument(format!("channel {ch} listed twice")));
        }
    }
    let dist = Normal::new(noise.mean, noise.std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut out = batch.clone();
    out.drop_grad();
    if group.is_empty() {
        return Ok(out);
    }
    for row in out.data_mut().chunks_exact_mut(c) {
        for &ch in group {
            row[ch] = dist.sample(rng) as Real;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkImportance {
    pub network: String,
    pub size: usize,
    /// Mean over repeats of baseline accuracy minus permuted accuracy.
    pub accuracy_drop: f64,
    pub accuracy_drop_normalized: f64,
    pub accuracy_drops: Vec<f64>,
    /// Mean over repeats of the per-class F1 drop, in task order.
    pub f1_drop: [f64; N_CLASSES],
    pub f1_drop_normalized: [f64; N_CLASSES],
    pub f1_drops: Vec<[f64; N_CLASSES]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub baseline_accuracy: f64,
    pub baseline_f1: [f64; N_CLASSES],
    pub noise: NoiseSpec,
    pub networks: Vec<NetworkImportance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSummary {
    /// Sample std across networks, per task.
    pub per_task_std: [f64; N_CLASSES],
    /// Mean across tasks, per network.
    pub per_network_mean: Vec<f64>,
    pub per_task_std_normalized: [f64; N_CLASSES],
    pub per_network_mean_normalized: Vec<f64>,
}

const EVAL_BATCH: usize = 64;

fn scores(truth: &[usize], predicted: &[usize]) -> Result<(f64, [f64; N_CLASSES])> {
    let cm = confusion(truth, predicted)?;
    Ok((cm.accuracy(), std::array::from_fn(|c| cm.f1(c).value)))
}

fn predict_all<M: Classifier + ?Sized>(
    model: &M,
    data: &LabeledSet,
    mut transform: impl FnMut(Tensor) -> Result<Tensor>,
) -> Result<Vec<usize>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in idx.chunks(EVAL_BATCH) {
        out.extend(model.predict_labels(&transform(data.batch(chunk))?)?);
    }
    Ok(out)
}

/// Accuracy and per-class F1 drops for every network and repeat.
pub fn compute_importance<M: Classifier + ?Sized>(
    model: &M,
    test: &LabeledSet,
    grouping: &NetworkGrouping,
    noise: &NoiseSpec,
) -> Result<ImportanceReport> {
    noise.validate()?;
    if test.is_empty() {
        return Err(Error::Insufficient("importance needs a non-empty test set".into()));
    }
    let (t, c) = model.input_shape();
    if (test.seq_len, test.channels) != (t, c) {
        return Err(Error::shape("importance", "sample size", t * c, test.sample_size()));
    }
    let baseline_pred = predict_all(model, test, Ok)?;
    let (baseline_accuracy, baseline_f1) = scores(&test.labels, &baseline_pred)?;
    let mut networks = Vec::with_capacity(grouping.len());
    for (k, group) in grouping.groups().iter().enumerate() {
        let mut accuracy_drops = Vec::with_capacity(noise.repeats);
        let mut f1_drops = Vec::with_capacity(noise.repeats);
        for r in 0..noise.repeats {
            let mut rng = seed::rng(noise.cell_seed(k, r), &[]);
            let pred = predict_all(model, test, |b| permute_group(&b, group, noise, &mut rng))?;
            let (acc, f1) = scores(&test.labels, &pred)?;
            accuracy_drops.push(baseline_accuracy - acc);
            f1_drops.push(std::array::from_fn(|i| baseline_f1[i] - f1[i]));
        }
        let n = noise.repeats as f64;
        let size = group.len();
        let accuracy_drop = accuracy_drops.iter().sum::<f64>() / n;
        let f1_drop: [f64; N_CLASSES] = std::array::from_fn(|i| f1_drops.iter().map(|d| d[i]).sum::<f64>() / n);
        networks.push(NetworkImportance {
            network: network_name(k),
            size,
            accuracy_drop,
            accuracy_drop_normalized: accuracy_drop / size as f64,
            accuracy_drops,
            f1_drop,
            f1_drop_normalized: f1_drop.map(|v| v / size as f64),
            f1_drops,
        });
    }
    Ok(ImportanceReport {
        baseline_accuracy,
        baseline_f1,
        noise: *noise,
        networks,
    })
}

/// Mean accuracy drop per network.
pub fn overall_importance<M: Classifier + ?Sized>(
    model: &M,
    test: &LabeledSet,
    grouping: &NetworkGrouping,
    noise: &NoiseSpec,
) -> Result<Vec<f64>> {
    Ok(compute_importance(model, test, grouping, noise)?
        .networks
        .iter()
        .map(|n| n.accuracy_drop)
        .collect())
}

/// Mean per-class F1 drop per network, `[networks][classes]`.
pub fn per_task_importance<M: Classifier + ?Sized>(
    model: &M,
    test: &LabeledSet,
    grouping: &NetworkGrouping,
    noise: &NoiseSpec,
) -> Result<Vec<[f64; N_CLASSES]>> {
    Ok(compute_importance(model, test, grouping, noise)?
        .networks
        .iter()
        .map(|n| n.f1_drop)
        .collect())
}

fn sample_std(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let first = v.clone().next();
    if n < 2.0 || v.clone().all(|x| Some(x) == first) {
        return 0.0;
    }
    let mean = v.clone().sum::<f64>() / n;
    (v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn summarize_table(rows: &[[f64; N_CLASSES]]) -> ([f64; N_CLASSES], Vec<f64>) {
    let std = std::array::from_fn(|c| sample_std(rows.iter().map(move |r| r[c])));
    let mean = rows.iter().map(|r| r.iter().sum::<f64>() / N_CLASSES as f64).collect();
    (std, mean)
}

pub fn summarize(report: &ImportanceReport) -> ImportanceSummary {
    let raw: Vec<[f64; N_CLASSES]> = report.networks.iter().map(|n| n.f1_drop).collect();
    let norm: Vec<[f64; N_CLASSES]> = report.networks.iter().map(|n| n.f1_drop_normalized).collect();
    let (per_task_std, per_network_mean) = summarize_table(&raw);
    let (per_task_std_normalized, per_network_mean_normalized) = summarize_table(&norm);
    ImportanceSummary {
        per_task_std,
        per_network_mean,
        per_task_std_normalized,
        per_network_mean_normalized,
    }
}

impl ImportanceReport {
    /// `network,size,accuracy_drop,accuracy_drop_normalized`.
    pub fn write_overall_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
        w.write_record(["network", "size", "accuracy_drop", "accuracy_drop_normalized"])?;
        for n in &self.networks {
            w.write_record([
                n.network.clone(),
                n.size.to_string(),
                format!("{:?}", n.accuracy_drop),
                format!("{:?}", n.accuracy_drop_normalized),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// `network,PVT,...,REST` with raw or size-normalized F1 drops.
    pub fn write_per_task_csv(&self, path: &Path, normalized: bool) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
        let mut header = vec!["network".to_string()];
        header.extend(Task::ALL.iter().map(|t| t.name().to_string()));
        w.write_record(&header)?;
        for n in &self.networks {
            let vals = if normalized { n.f1_drop_normalized } else { n.f1_drop };
            let mut row = vec![n.network.clone()];
            row.extend(vals.iter().map(|v| format!("{v:?}")));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
