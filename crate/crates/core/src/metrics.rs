//! Confusion matrices and accuracy, precision, recall and F1.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::N_CLASSES;

/// Counts with rows = true class and columns = predicted class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
}

/// A ratio whose denominator may be zero; undefined values read as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub undefined: bool,
}

impl Metric {
    fn ratio(num: f64, den: f64) -> Self {
        if den == 0.0 {
            Metric { value: 0.0, undefined: true }
        } else {
            Metric { value: num / den, undefined: false }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub task: Task,
    pub support: u64,
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub total: u64,
    pub classes: Vec<ClassScores>,
}

impl ClassMetrics {
    pub fn f1(&self, class: usize) -> f64 {
        self.classes[class].f1.value
    }
}

pub fn confusion(truth: &[usize], predicted: &[usize]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::shape("confusion", "label count", truth.len(), predicted.len()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= N_CLASSES || p >= N_CLASSES {
            return Err(Error::InvalidArgument(format!("label {} out of range", t.max(p))));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    /// trace / total; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        Metric::ratio((0..N_CLASSES).map(|c| self.counts[c][c]).sum::<u64>() as f64, self.total() as f64).value
    }

    pub fn precision(&self, class: usize) -> Metric {
        Metric::ratio(self.counts[class][class] as f64, self.col_sum(class) as f64)
    }

    pub fn recall(&self, class: usize) -> Metric {
        Metric::ratio(self.counts[class][class] as f64, self.row_sum(class) as f64)
    }

    /// Harmonic mean of precision and recall; undefined if either is, or both are 0.
    pub fn f1(&self, class: usize) -> Metric {
        let (p, r) = (self.precision(class), self.recall(class));
        if p.undefined || r.undefined {
            return Metric { value: 0.0, undefined: true };
        }
        Metric::ratio(2.0 * p.value * r.value, p.value + r.value)
    }

    pub fn metrics(&self) -> ClassMetrics {
        ClassMetrics {
            accuracy: self.accuracy(),
            total: self.total(),
            classes: Task::ALL
                .iter()
                .map(|&task| {
                    let c = task.index();
                    ClassScores {
                        task,
                        support: self.row_sum(c),
                        precision: self.precision(c),
                        recall: self.recall(c),
                        f1: self.f1(c),
                    }
                })
                .collect(),
        }
    }

    /// CSV with a `true\predicted` corner cell and task names on both axes.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("true\\predicted");
        for t in Task::ALL {
            out.push(',');
            out.push_str(t.name());
        }
        out.push('\n');
        for t in Task::ALL {
            out.push_str(t.name());
            for v in self.counts[t.index()] {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}
