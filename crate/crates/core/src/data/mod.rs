//! Recording ingest and preparation: z-scoring, fixed-length segmentation,
//! subject/task-aware splits and functional network groupings.

mod grouping;
mod io;
mod prep;
mod split;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use grouping::{load_grouping, network_name, write_grouping, NetworkGrouping};
pub use io::{
    load_recordings, read_series, read_series_binary, read_series_csv, write_manifest, write_series_binary,
    write_series_csv, LoadedData, ManifestRow, SERIES_MAGIC,
};
pub use prep::{expected_segment_count, prepare_segments, segment, segment_with, zscore, ZScoreOutcome};
pub use split::{split, SplitAssignment, SplitSpec};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};
use crate::N_CHANNELS;

/// Task states, in the fixed order used for labels and every report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Task {
    Pvt,
    Vwm,
    Dot,
    Mod,
    Dyn,
    Rest,
}

impl Task {
    pub const ALL: [Task; 6] = [Task::Pvt, Task::Vwm, Task::Dot, Task::Mod, Task::Dyn, Task::Rest];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Task> {
        Task::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Pvt => "PVT",
            Task::Vwm => "VWM",
            Task::Dot => "DOT",
            Task::Mod => "MOD",
            Task::Dyn => "DYN",
            Task::Rest => "REST",
        }
    }

    /// Tasks with a behavioral performance score.
    pub fn is_scored(self) -> bool {
        matches!(self, Task::Pvt | Task::Vwm | Task::Mod)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown task `{s}`")))
    }
}

/// One session's regional time series for one task, `[T, 214]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecording {
    pub subject_id: String,
    pub session_index: u32,
    pub task: Task,
    pub series: Tensor,
}

impl SessionRecording {
    pub fn new(subject_id: impl Into<String>, session_index: u32, task: Task, series: Tensor) -> Result<Self> {
        let subject_id = subject_id.into();
        match *series.shape() {
            [t, c] => {
                if c != N_CHANNELS {
                    return Err(Error::shape("recording", "channels", N_CHANNELS, c));
                }
                if t == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "recording {subject_id}/{session_index}/{task} is empty"
                    )));
                }
            }
            _ => return Err(Error::shape("recording", "rank", 2, series.shape().len())),
        }
        if !(1..=8).contains(&session_index) {
            return Err(Error::InvalidArgument(format!(
                "session index {session_index} outside 1..=8"
            )));
        }
        series.ensure_finite("recording")?;
        Ok(SessionRecording {
            subject_id,
            session_index,
            task,
            series,
        })
    }

    pub fn len(&self) -> usize {
        self.series.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.series.shape()[1]
    }
}

/// One labelled fixed-length window cut from a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: String,
    /// Row-major `[len, channels]`.
    pub data: Vec<Real>,
    pub len: usize,
    pub channels: usize,
    pub label: Task,
    pub subject_id: String,
    pub session_index: u32,
    /// First source time point.
    pub start: usize,
    /// Zero rows appended at the end.
    pub pad_count: usize,
    pub ebq: Option<u8>,
}

/// Flat training/evaluation set: `[n, seq_len, channels]` plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub seq_len: usize,
    pub channels: usize,
    pub data: Vec<Real>,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(seq_len: usize, channels: usize, data: Vec<Real>, labels: Vec<usize>) -> Result<Self> {
        if data.len() != labels.len() * seq_len * channels {
            return Err(Error::shape(
                "labeled set",
                "element count",
                labels.len() * seq_len * channels,
                data.len(),
            ));
        }
        Ok(LabeledSet {
            seq_len,
            channels,
            data,
            labels,
        })
    }

    pub fn from_segments<'a, I>(segments: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Segment>,
    {
        let mut it = segments.into_iter().peekable();
        let (len, ch) = match it.peek() {
            Some(s) => (s.len, s.channels),
            None => return Err(Error::Insufficient("no segments".into())),
        };
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for s in it {
            if s.len != len || s.channels != ch {
                return Err(Error::shape("labeled set", "segment shape", len * ch, s.len * s.channels));
            }
            data.extend_from_slice(&s.data);
            labels.push(s.label.index());
        }
        Ok(LabeledSet {
            seq_len: len,
            channels: ch,
            data,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_size(&self) -> usize {
        self.seq_len * self.channels
    }

    pub fn sample(&self, i: usize) -> &[Real] {
        let n = self.sample_size();
        &self.data[i * n..(i + 1) * n]
    }

    /// Copies the listed samples into a `[k, seq_len, channels]` batch.
    pub fn batch(&self, indices: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * self.sample_size());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Tensor::from_vec(&[indices.len(), self.seq_len, self.channels], data).expect("sizes agree")
    }

    pub fn batch_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Whole set as one `[n, seq_len, channels]` tensor.
    pub fn as_tensor(&self) -> Tensor {
        Tensor::from_vec(&[self.len(), self.seq_len, self.channels], self.data.clone()).expect("sizes agree")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_order_and_parsing() {
        assert_eq!(Task::ALL.map(Task::index), [0, 1, 2, 3, 4, 5]);
        assert_eq!("vwm".parse::<Task>().unwrap(), Task::Vwm);
        assert_eq!(" REST ".parse::<Task>().unwrap(), Task::Rest);
        assert!("nap".parse::<Task>().is_err());
        assert_eq!(Task::from_index(6), None);
        assert!(Task::Pvt.is_scored() && !Task::Dot.is_scored());
    }

    #[test]
    fn recording_validation() {
        assert!(SessionRecording::new("s", 1, Task::Pvt, Tensor::zeros(&[3, 214])).is_ok());
        assert!(SessionRecording::new("s", 1, Task::Pvt, Tensor::zeros(&[3, 213])).is_err());
        assert!(SessionRecording::new("s", 0, Task::Pvt, Tensor::zeros(&[3, 214])).is_err());
        assert!(SessionRecording::new("s", 9, Task::Pvt, Tensor::zeros(&[3, 214])).is_err());
        let mut bad = Tensor::zeros(&[2, 214]);
        bad.data_mut()[7] = Real::INFINITY;
        assert!(SessionRecording::new("s", 1, Task::Pvt, bad).is_err());
    }

    #[test]
    fn labeled_set_batches() {
        let set = LabeledSet::new(2, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![0, 4, 5]).unwrap();
        let b = set.batch(&[2, 0]);
        assert_eq!(b.shape(), &[2, 2, 1]);
        assert_eq!(b.data(), &[5.0, 6.0, 1.0, 2.0]);
        assert_eq!(set.batch_labels(&[2, 0]), vec![5, 0]);
        assert!(LabeledSet::new(2, 1, vec![0.0; 5], vec![0, 0, 0]).is_err());
    }
}
