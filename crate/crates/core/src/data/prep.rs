use log::warn;

use super::{Segment, SessionRecording};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};
use crate::{MIN_SEGMENT_LEN, SEGMENT_LEN};

#[derive(Debug, Clone, PartialEq)]
pub struct ZScoreOutcome {
    pub recording: SessionRecording,
    /// Channels with zero variance, which were set to all zeros.
    pub zero_variance_channels: Vec<usize>,
}

/// Standardizes every channel to mean 0 and population std 1.
pub fn zscore(recording: &SessionRecording) -> ZScoreOutcome {
    let t = recording.len();
    let c = recording.channels();
    let src = recording.series.data();
    let mut out = vec![0.0 as Real; t * c];
    let mut zero_variance_channels = Vec::new();
    for ch in 0..c {
        let mean = (0..t).map(|i| src[i * c + ch] as f64).sum::<f64>() / t as f64;
        let var = (0..t)
            .map(|i| {
                let d = src[i * c + ch] as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / t as f64;
        let std = var.sqrt();
        if std == 0.0 || !std.is_finite() || std < mean.abs() * 1e-14 {
            zero_variance_channels.push(ch);
            continue;
        }
        for i in 0..t {
            out[i * c + ch] = ((src[i * c + ch] as f64 - mean) / std) as Real;
        }
    }
    if !zero_variance_channels.is_empty() {
        warn!(
            "{}/{}/{}: {} zero-variance channel(s) set to zero: {:?}",
            recording.subject_id,
            recording.session_index,
            recording.task,
            zero_variance_channels.len(),
            zero_variance_channels
        );
    }
    ZScoreOutcome {
        recording: SessionRecording {
            subject_id: recording.subject_id.clone(),
            session_index: recording.session_index,
            task: recording.task,
            series: Tensor::from_vec(&[t, c], out).expect("same shape"),
        },
        zero_variance_channels,
    }
}

/// Number of segments a length-`t` recording yields.
pub fn expected_segment_count(t: usize, length: usize, min_length: usize) -> usize {
    let residual = t % length;
    t / length + usize::from(residual >= min_length && residual > 0)
}

/// Cuts non-overlapping `length` windows from t=0; a residual of at least
/// `min_length` points is zero-padded, shorter residuals are discarded.
pub fn segment_with(recording: &SessionRecording, length: usize, min_length: usize) -> Result<Vec<Segment>> {
    if length == 0 || min_length == 0 || min_length > length {
        return Err(Error::InvalidArgument(format!(
            "segment length {length} / minimum {min_length} invalid"
        )));
    }
    let t = recording.len();
    let c = recording.channels();
    let src = recording.series.data();
    let mut out = Vec::new();
    let mut start = 0;
    while start < t {
        let real = (t - start).min(length);
        if real < min_length {
            break;
        }
        let mut data = vec![0.0 as Real; length * c];
        data[..real * c].copy_from_slice(&src[start * c..(start + real) * c]);
        out.push(Segment {
            id: format!(
                "{}/{}/{}/{}",
                recording.subject_id,
                recording.session_index,
                recording.task,
                out.len()
            ),
            data,
            len: length,
            channels: c,
            label: recording.task,
            subject_id: recording.subject_id.clone(),
            session_index: recording.session_index,
            start,
            pad_count: length - real,
            ebq: None,
        });
        start += length;
    }
    Ok(out)
}

pub fn segment(recording: &SessionRecording) -> Vec<Segment> {
    segment_with(recording, SEGMENT_LEN, MIN_SEGMENT_LEN).expect("default lengths are valid")
}

/// z-scores and segments each recording, in input order.
pub fn prepare_segments(recordings: &[SessionRecording]) -> Vec<Segment> {
    recordings
        .iter()
        .flat_map(|r| segment(&zscore(r).recording))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn recording(t: usize, seed: u64) -> SessionRecording {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..t * 214).map(|_| rng.random_range(-5.0..9.0)).collect();
        SessionRecording::new("s", 1, Task::Vwm, Tensor::from_vec(&[t, 214], data).unwrap()).unwrap()
    }

    fn channel(r: &SessionRecording, ch: usize) -> Vec<f64> {
        let c = r.channels();
        (0..r.len()).map(|i| r.series.data()[i * c + ch] as f64).collect()
    }

    #[test]
    fn zscore_closed_form() {
        let mut rec = recording(3, 1);
        for i in 0..3 {
            rec.series.data_mut()[i * 214] = (i + 1) as Real;
        }
        let z = zscore(&rec).recording;
        let s = (2.0f64 / 3.0).sqrt();
        let ch0 = channel(&z, 0);
        for (got, want) in ch0.iter().zip([-1.0 / s, 0.0, 1.0 / s]) {
            assert!((got - want).abs() < 1e-12);
        }
        for ch in 0..214 {
            let v = channel(&z, ch);
            let mean = v.iter().sum::<f64>() / 3.0;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-9);
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zscore_is_idempotent() {
        let once = zscore(&recording(50, 2)).recording;
        let twice = zscore(&once).recording;
        for (a, b) in once.series.data().iter().zip(twice.series.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_channel_becomes_zero() {
        let mut rec = recording(10, 3);
        for i in 0..10 {
            rec.series.data_mut()[i * 214 + 5] = 4.25;
        }
        let out = zscore(&rec);
        assert_eq!(out.zero_variance_channels, vec![5]);
        assert!(channel(&out.recording, 5).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn segmentation_examples() {
        let segs = segment(&recording(800, 4));
        assert_eq!(segs.len(), 2);
        assert!(segs.iter().all(|s| s.pad_count == 0));

        let rec = recording(824, 5);
        let segs = segment(&rec);
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[2].pad_count, 7);
        assert_eq!(segs[2].start, 554);
        assert!(segs[2].data[270 * 214..].iter().all(|&v| v == 0.0));
        assert_eq!(&segs[2].data[..270 * 214], &rec.series.data()[554 * 214..]);

        let segs = segment(&recording(277, 6));
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].pad_count, 0);
        assert_eq!(segs[0].data.len(), 277 * 214);
    }

    #[test]
    fn short_recordings() {
        assert_eq!(segment(&recording(266, 7)).len(), 0);
        let s = segment(&recording(267, 7));
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].pad_count, 10);
    }

    #[test]
    fn count_matches_rule() {
        for t in 1..1200 {
            let r = t % 277;
            let want = t / 277 + usize::from(r >= 267);
            assert_eq!(expected_segment_count(t, 277, 267), want, "T={t}");
        }
    }
}
