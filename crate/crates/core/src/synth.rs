//! Synthetic recordings with planted network signatures and a planted
//! coupling between behavioral performance and signal-to-noise ratio.
//!
//! Every channel carries unit-variance pink noise. Channels of a task's
//! planted networks add a sinusoid whose frequency lies in the task's band,
//! with a per-channel phase offset, scaled by `amplitude * snr`. With
//! coupling on, a session's SNR is `base_snr * (0.5 + p)` where `p` is the
//! session's performance percentile; with coupling off it is `base_snr`.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::behavior::PerformanceRecord;
use crate::data::{
    network_name, write_grouping, write_manifest, write_series_binary, write_series_csv, ManifestRow, NetworkGrouping,
    SessionRecording, Task,
};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};
use crate::{seed, N_CHANNELS, N_NETWORKS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Signature {
    pub task: Task,
    /// Zero-based network indices (0 = N1).
    pub networks: Vec<usize>,
    pub amplitude: f64,
    /// Frequency band in cycles per sample.
    pub band: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_subjects: usize,
    /// Index of the first generated subject; subjects with the same index
    /// and seed are identical across cohorts.
    pub first_subject: usize,
    pub sessions_per_subject: u32,
    /// Range each task's recording length is drawn from.
    pub length_range: [usize; 2],
    /// Explicit per-task lengths in task order; drawn from `length_range` when absent.
    pub task_lengths: Option<[usize; 6]>,
    pub signatures: Vec<Signature>,
    /// Spectral exponent of the baseline noise (1.0 = pink).
    pub noise_exponent: f64,
    pub base_snr: f64,
    pub coupling: bool,
    /// Spread of session performance around the subject's ability.
    pub session_spread: f64,
    /// When set, each signature oscillates at the whole-cycle frequency
    /// (cycles per this many samples) nearest its band centre with a phase
    /// fixed per task, so every window of this length starting at a
    /// multiple of it sees the same waveform up to jitter.
    pub lock_period: Option<usize>,
    /// Uniform per-recording phase jitter in radians.
    pub phase_jitter: f64,
    pub seed: u64,
}

fn sig(task: Task, network: usize, band: [f64; 2]) -> Signature {
    Signature {
        task,
        networks: vec![network - 1],
        amplitude: 1.0,
        band,
    }
}

pub fn default_signatures() -> Vec<Signature> {
    vec![
        sig(Task::Pvt, 5, [0.06, 0.08]),
        sig(Task::Vwm, 10, [0.09, 0.11]),
        sig(Task::Dot, 1, [0.12, 0.14]),
        sig(Task::Mod, 7, [0.15, 0.17]),
        sig(Task::Dyn, 2, [0.18, 0.20]),
        sig(Task::Rest, 13, [0.03, 0.05]),
    ]
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_subjects: 12,
            first_subject: 0,
            sessions_per_subject: 4,
            length_range: [290, 800],
            task_lengths: None,
            signatures: default_signatures(),
            noise_exponent: 1.0,
            base_snr: 2.5,
            coupling: true,
            session_spread: 0.5,
            lock_period: Some(crate::SEGMENT_LEN),
            phase_jitter: 0.5,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.n_subjects == 0 || !(1..=8).contains(&self.sessions_per_subject) {
            return err("need at least one subject and 1..=8 sessions".into());
        }
        let [lo, hi] = self.length_range;
        if lo == 0 || lo > hi {
            return err(format!("invalid length range {lo}..{hi}"));
        }
        if let Some(l) = self.task_lengths {
            if l.contains(&0) {
                return err("task lengths must be positive".into());
            }
        }
        for s in &self.signatures {
            if s.networks.iter().any(|&n| n >= N_NETWORKS) {
                return err(format!("{} signature names a network outside N1..N17", s.task));
            }
            if !(s.amplitude >= 0.0 && s.amplitude.is_finite()) {
                return err(format!("{} amplitude must be finite and non-negative", s.task));
            }
            if !(0.0 < s.band[0] && s.band[0] <= s.band[1] && s.band[1] < 0.5) {
                return err(format!("{} band {:?} must lie in (0, 0.5)", s.task, s.band));
            }
        }
        if !(self.base_snr >= 0.0 && self.noise_exponent.is_finite() && self.session_spread >= 0.0) {
            return err("invalid snr, exponent or spread".into());
        }
        if !(self.phase_jitter >= 0.0 && self.phase_jitter.is_finite()) {
            return err("phase jitter must be finite and non-negative".into());
        }
        if let Some(p) = self.lock_period {
            for s in &self.signatures {
                if s.amplitude > 0.0 && (s.band[0] * p as f64).ceil() > (s.band[1] * p as f64).floor() {
                    return err(format!("{} band holds no whole-cycle frequency for period {p}", s.task));
                }
            }
        }
        Ok(())
    }

    pub fn lengths(&self) -> [usize; 6] {
        self.task_lengths.unwrap_or_else(|| {
            let mut rng = seed::rng(self.seed, &[seed::hash_str("lengths")]);
            let [lo, hi] = self.length_range;
            std::array::from_fn(|_| rng.random_range(lo..=hi))
        })
    }

    /// Planted networks per task, in task order.
    pub fn planted(&self) -> [Vec<usize>; 6] {
        let mut out: [Vec<usize>; 6] = Default::default();
        for s in &self.signatures {
            if s.amplitude > 0.0 {
                out[s.task.index()].extend(&s.networks);
            }
        }
        for v in &mut out {
            v.sort_unstable();
            v.dedup();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTruth {
    pub subject_id: String,
    pub session_index: u32,
    pub ability: f64,
    pub performance: f64,
    pub percentile: f64,
    pub snr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub task_lengths: [usize; 6],
    /// Planted network names per task.
    pub planted: Vec<(Task, Vec<String>)>,
    pub sessions: Vec<SessionTruth>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    /// Sorted by (subject, session, task).
    pub recordings: Vec<SessionRecording>,
    pub performance: Vec<PerformanceRecord>,
    pub grouping: NetworkGrouping,
    pub truth: GroundTruth,
}

pub fn subject_id(i: usize) -> String {
    format!("sub{:02}", i + 1)
}

/// Unit-variance noise with power spectrum proportional to 1/f^exponent.
pub fn colored_noise<R: Rng + ?Sized>(len: usize, exponent: f64, planner: &mut FftPlanner<f64>, rng: &mut R) -> Vec<f64> {
    if len < 2 {
        return vec![0.0; len];
    }
    let mut buf: Vec<Complex<f64>> = (0..len)
        .map(|_| Complex::new(StandardNormal.sample(rng), 0.0))
        .collect();
    planner.plan_fft_forward(len).process(&mut buf);
    buf[0] = Complex::new(0.0, 0.0);
    for (k, v) in buf.iter_mut().enumerate().skip(1) {
        let f = k.min(len - k) as f64 / len as f64;
        *v *= f.powf(-exponent / 2.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let re: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let mean = re.iter().sum::<f64>() / len as f64;
    let sd = (re.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len as f64).sqrt();
    if sd == 0.0 {
        return vec![0.0; len];
    }
    re.iter().map(|v| (v - mean) / sd).collect()
}

/// Fraction of sessions with a strictly lower value, scaled to [0, 1].
fn percentiles(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.5; n];
    }
    values
        .iter()
        .map(|v| values.iter().filter(|w| *w < v).count() as f64 / (n - 1) as f64)
        .collect()
}

fn channel_phase(spec_seed: u64, channel: usize) -> f64 {
    let mut rng = seed::rng(spec_seed, &[seed::hash_str("phase"), channel as u64]);
    rng.random_range(0.0..2.0 * PI)
}

fn locked_frequency(band: [f64; 2], period: f64) -> f64 {
    let lo = (band[0] * period).ceil();
    let hi = (band[1] * period).floor();
    ((band[0] + band[1]) / 2.0 * period).round().clamp(lo, hi) / period
}

fn task_phase(spec_seed: u64, task: Task) -> f64 {
    let mut rng = seed::rng(spec_seed, &[seed::hash_str("task phase"), task.index() as u64]);
    rng.random_range(0.0..2.0 * PI)
}

fn session_key(s: &SessionTruth) -> (u64, u64) {
    let subject: u64 = s.subject_id[3..].parse().expect("generated subject id");
    (subject, s.session_index as u64)
}

pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let grouping = NetworkGrouping::synthetic();
    let lengths = spec.lengths();
    let mut sessions = Vec::new();
    for s in spec.first_subject..spec.first_subject + spec.n_subjects {
        let mut rng = seed::rng(spec.seed, &[seed::hash_str("ability"), s as u64]);
        let ability: f64 = rng.sample::<f64, _>(StandardNormal).clamp(-2.5, 2.5);
        for j in 1..=spec.sessions_per_subject {
            let mut rng = seed::rng(spec.seed, &[seed::hash_str("session"), s as u64, j as u64]);
            let spread = Normal::new(0.0, spec.session_spread.max(1e-12)).expect("finite spread");
            sessions.push(SessionTruth {
                subject_id: subject_id(s),
                session_index: j,
                ability,
                performance: ability + spread.sample(&mut rng),
                percentile: 0.0,
                snr: 0.0,
            });
        }
    }
    let pct = percentiles(&sessions.iter().map(|s| s.performance).collect::<Vec<_>>());
    for (s, p) in sessions.iter_mut().zip(pct) {
        s.percentile = p;
        s.snr = if spec.coupling {
            spec.base_snr * (0.5 + p)
        } else {
            spec.base_snr
        };
    }

    let mut performance = Vec::new();
    for s in &sessions {
        let key = session_key(s);
        let mut rng = seed::rng(spec.seed, &[seed::hash_str("scores"), key.0, key.1]);
        let mut noise = |sd: f64| -> f64 { sd * rng.sample::<f64, _>(StandardNormal) };
        let q = s.performance;
        let pvt = (350.0 - 40.0 * q + noise(15.0)).max(150.0);
        let vwm = (0.75 + 0.08 * q + noise(0.03)).clamp(0.0, 1.0);
        let mod_ = (0.75 + 0.08 * q + noise(0.03)).clamp(0.0, 1.0);
        for (task, score) in [(Task::Pvt, pvt), (Task::Vwm, vwm), (Task::Mod, mod_)] {
            performance.push(PerformanceRecord::new(s.subject_id.clone(), s.session_index, task, score)?);
        }
    }

    let phases: Vec<f64> = (0..N_CHANNELS).map(|c| channel_phase(spec.seed, c)).collect();
    let mut planner = FftPlanner::new();
    let mut recordings = Vec::new();
    for s in &sessions {
        let key = session_key(s);
        for task in Task::ALL {
            let t_len = lengths[task.index()];
            let mut rng = seed::rng(spec.seed, &[seed::hash_str("recording"), key.0, key.1, task.index() as u64]);
            let mut data = vec![0.0 as Real; t_len * N_CHANNELS];
            for ch in 0..N_CHANNELS {
                let noise = colored_noise(t_len, spec.noise_exponent, &mut planner, &mut rng);
                for (t, v) in noise.into_iter().enumerate() {
                    data[t * N_CHANNELS + ch] = v as Real;
                }
            }
            for sig in spec.signatures.iter().filter(|g| g.task == task && g.amplitude > 0.0) {
                let (f, base_phase) = match spec.lock_period {
                    Some(p) => {
                        let p = p as f64;
                        (locked_frequency(sig.band, p), task_phase(spec.seed, task))
                    }
                    None => (rng.random_range(sig.band[0]..=sig.band[1]), rng.random_range(0.0..2.0 * PI)),
                };
                let phi0 = base_phase + spec.phase_jitter * rng.random_range(-1.0..=1.0);
                let amp = sig.amplitude * s.snr;
                for &net in &sig.networks {
                    for &ch in grouping.group(net) {
                        for t in 0..t_len {
                            let x = amp * (2.0 * PI * f * t as f64 + phi0 + phases[ch]).sin();
                            data[t * N_CHANNELS + ch] += x as Real;
                        }
                    }
                }
            }
            let series = Tensor::from_vec(&[t_len, N_CHANNELS], data)?;
            recordings.push(SessionRecording::new(s.subject_id.clone(), s.session_index, task, series)?);
        }
    }
    let planted = spec
        .planted()
        .iter()
        .enumerate()
        .map(|(i, nets)| (Task::ALL[i], nets.iter().map(|&n| network_name(n)).collect()))
        .collect();
    Ok(SynthDataset {
        recordings,
        performance,
        grouping,
        truth: GroundTruth {
            spec: spec.clone(),
            task_lengths: lengths,
            planted,
            sessions,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SeriesFormat {
    #[default]
    Binary,
    Csv,
}

/// Writes `manifest.csv`, one series file per recording, `grouping.csv` and
/// `ground_truth.json` into `dir`.
pub fn write_dataset(dataset: &SynthDataset, dir: &Path, format: SeriesFormat) -> Result<()> {
    std::fs::create_dir_all(dir.join("series")).map_err(|e| Error::io(dir, e))?;
    let mut rows = Vec::with_capacity(dataset.recordings.len());
    for r in &dataset.recordings {
        let ext = match format {
            SeriesFormat::Binary => "bin",
            SeriesFormat::Csv => "csv",
        };
        let file = format!("series/{}_ses{}_{}.{ext}", r.subject_id, r.session_index, r.task);
        let path = dir.join(&file);
        match format {
            SeriesFormat::Binary => write_series_binary(&path, &r.series)?,
            SeriesFormat::Csv => write_series_csv(&path, &r.series)?,
        }
        let score = dataset
            .performance
            .iter()
            .find(|p| p.subject_id == r.subject_id && p.session_index == r.session_index && p.task == r.task)
            .map(|p| p.score);
        rows.push(ManifestRow {
            subject_id: r.subject_id.clone(),
            session_index: r.session_index,
            task: r.task,
            file,
            performance_score: score,
        });
    }
    write_manifest(&dir.join("manifest.csv"), &rows)?;
    write_grouping(&dir.join("grouping.csv"), &dataset.grouping)?;
    let path = dir.join("ground_truth.json");
    let json = serde_json::to_string_pretty(&dataset.truth)?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            n_subjects: 3,
            sessions_per_subject: 2,
            task_lengths: Some([300, 290, 310, 320, 295, 305]),
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.recordings, b.recordings);
        assert_eq!(a.performance, b.performance);
        let c = generate(&SynthSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.recordings[0].series, c.recordings[0].series);
    }

    #[test]
    fn class_priors_are_balanced() {
        let d = generate(&small()).unwrap();
        for t in Task::ALL {
            assert_eq!(d.recordings.iter().filter(|r| r.task == t).count(), 6);
        }
        assert_eq!(d.performance.len(), 18);
    }

    #[test]
    fn lengths_stay_in_range() {
        let spec = SynthSpec::default();
        let l = spec.lengths();
        assert!(l.iter().all(|&v| (290..=800).contains(&v)));
        assert_eq!(l, spec.lengths());
    }

    #[test]
    fn pink_noise_is_unit_variance_and_low_frequency_heavy() {
        let mut planner = FftPlanner::new();
        let mut rng = seed::rng(1, &[]);
        let x = colored_noise(1024, 1.0, &mut planner, &mut rng);
        let var = x.iter().map(|v| v * v).sum::<f64>() / 1024.0;
        assert!((var - 1.0).abs() < 1e-9);
        let lag1 = x.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / 1023.0;
        assert!(lag1 > 0.3, "{lag1}");
    }

    fn band_power(series: &Tensor, ch: usize, band: [f64; 2]) -> f64 {
        let (t, c) = (series.shape()[0], series.shape()[1]);
        let x: Vec<f64> = (0..t).map(|i| series.data()[i * c + ch] as f64).collect();
        let mut p = 0.0;
        let k0 = (band[0] * t as f64).floor() as usize;
        let k1 = (band[1] * t as f64).ceil() as usize;
        for k in k0..=k1 {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                let a = 2.0 * PI * k as f64 * i as f64 / t as f64;
                re += v * a.cos();
                im -= v * a.sin();
            }
            p += re * re + im * im;
        }
        p
    }

    #[test]
    fn planted_channels_have_more_band_power() {
        let d = generate(&small()).unwrap();
        let spec = small();
        for r in d.recordings.iter().take(12) {
            let s = spec.signatures.iter().find(|s| s.task == r.task).unwrap();
            let planted: Vec<usize> = s.networks.iter().flat_map(|&n| d.grouping.group(n).to_vec()).collect();
            let other: Vec<usize> = (0..N_CHANNELS).filter(|c| !planted.contains(c)).step_by(7).collect();
            let mean = |chs: &[usize]| chs.iter().map(|&c| band_power(&r.series, c, s.band)).sum::<f64>() / chs.len() as f64;
            assert!(mean(&planted) / mean(&other) > 1.0);
        }
    }

    #[test]
    fn zero_amplitude_is_pure_noise() {
        let mut spec = small();
        for s in &mut spec.signatures {
            s.amplitude = 0.0;
        }
        let d = generate(&spec).unwrap();
        let r = &d.recordings[0];
        let t = r.len();
        for ch in [0, 50, 213] {
            let v: Vec<f64> = (0..t).map(|i| r.series.data()[i * N_CHANNELS + ch] as f64).collect();
            let var = v.iter().map(|x| x * x).sum::<f64>() / t as f64;
            assert!((var - 1.0).abs() < 1e-9);
        }
        assert!(spec.planted().iter().all(Vec::is_empty));
    }

    #[test]
    fn coupling_makes_snr_track_performance() {
        let d = generate(&SynthSpec { n_subjects: 6, base_snr: 1.0, ..small() }).unwrap();
        let s = &d.truth.sessions;
        for a in s {
            for b in s {
                if a.performance < b.performance {
                    assert!(a.snr < b.snr);
                }
            }
            assert!((0.5..=1.5).contains(&a.snr));
        }
        let off = generate(&SynthSpec { coupling: false, base_snr: 1.0, ..small() }).unwrap();
        assert!(off.truth.sessions.iter().all(|s| s.snr == 1.0));
        // Scores follow performance: best session has the fastest mean PVT trend.
        let best = s.iter().max_by(|a, b| a.performance.total_cmp(&b.performance)).unwrap();
        let worst = s.iter().min_by(|a, b| a.performance.total_cmp(&b.performance)).unwrap();
        let vwm = |t: &SessionTruth| {
            d.performance
                .iter()
                .find(|p| p.subject_id == t.subject_id && p.session_index == t.session_index && p.task == Task::Vwm)
                .unwrap()
                .score
        };
        assert!(vwm(best) > vwm(worst));
    }

    #[test]
    fn written_dataset_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate(&small()).unwrap();
        write_dataset(&d, dir.path(), SeriesFormat::Binary).unwrap();
        let loaded = crate::data::load_recordings(dir.path()).unwrap();
        assert_eq!(loaded.recordings, d.recordings);
        assert_eq!(loaded.performance.len(), d.performance.len());
        assert_eq!(crate::data::load_grouping(&dir.path().join("grouping.csv")).unwrap(), d.grouping);
    }

    #[test]
    fn invalid_specs() {
        let mut s = small();
        s.signatures[0].networks = vec![17];
        assert!(generate(&s).is_err());
        let mut s = small();
        s.signatures[0].band = [0.3, 0.2];
        assert!(generate(&s).is_err());
        assert!(generate(&SynthSpec { sessions_per_subject: 9, ..small() }).is_err());
    }
}
