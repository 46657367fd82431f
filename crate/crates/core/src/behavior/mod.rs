//! Effective behavior quartiles and their relation to prediction correctness.

mod stats;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::warn;
use serde::{Deserialize, Serialize};

pub use stats::{inc_beta, ln_gamma, mean, median, pearson_r, t_two_tailed_p, welch_t, PearsonResult, WelchResult};

use crate::data::{Segment, Task};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerIsBetter,
    HigherIsBetter,
}

/// One session's score on one scored task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRecord {
    pub subject_id: String,
    pub session_index: u32,
    pub task: Task,
    /// Mean reaction time in ms for PVT, accuracy in [0, 1] for VWM and MOD.
    pub score: f64,
}

impl PerformanceRecord {
    pub fn new(subject_id: impl Into<String>, session_index: u32, task: Task, score: f64) -> Result<Self> {
        let ok = match task {
            Task::Pvt => score.is_finite() && score > 0.0,
            Task::Vwm | Task::Mod => (0.0..=1.0).contains(&score),
            _ => {
                return Err(Error::InvalidArgument(format!("{task} has no performance score")));
            }
        };
        if !ok {
            return Err(Error::InvalidArgument(format!("{task} score {score} out of range")));
        }
        Ok(PerformanceRecord {
            subject_id: subject_id.into(),
            session_index,
            task,
            score,
        })
    }

    pub fn direction(&self) -> Direction {
        direction(self.task)
    }

    /// Score oriented so that larger is better.
    pub fn adjusted(&self) -> f64 {
        match self.direction() {
            Direction::LowerIsBetter => -self.score,
            Direction::HigherIsBetter => self.score,
        }
    }

    pub fn session(&self) -> SessionKey {
        (self.subject_id.clone(), self.session_index)
    }
}

pub fn direction(task: Task) -> Direction {
    if task == Task::Pvt {
        Direction::LowerIsBetter
    } else {
        Direction::HigherIsBetter
    }
}

/// (subject_id, session_index).
pub type SessionKey = (String, u32);

/// Quartile 1..=4 of each value: 1 + floor(4r / n), with r the number of
/// strictly smaller values. Ties share the lower quartile.
pub fn rank_quartiles(values: &[f64]) -> Vec<u8> {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    values
        .iter()
        .map(|v| {
            let r = sorted.partition_point(|s| s.total_cmp(v).is_lt());
            (1 + (4 * r) / n).min(4) as u8
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionQuartile {
    pub subject_id: String,
    pub session_index: u32,
    pub quartile: u8,
    /// Shares its score with at least one other session.
    pub tied: bool,
}

/// Direction-adjusted quartiles of one task's sessions (1 = worst, 4 = best).
pub fn task_quartiles(records: &[PerformanceRecord]) -> Result<Vec<SessionQuartile>> {
    if records.len() < 4 {
        return Err(Error::Insufficient(format!(
            "quartiles need at least 4 sessions, got {}",
            records.len()
        )));
    }
    let task = records[0].task;
    if records.iter().any(|r| r.task != task) {
        return Err(Error::InvalidArgument("task_quartiles given records of several tasks".into()));
    }
    let adjusted: Vec<f64> = records.iter().map(PerformanceRecord::adjusted).collect();
    let q = rank_quartiles(&adjusted);
    Ok(records
        .iter()
        .zip(q)
        .zip(&adjusted)
        .map(|((r, quartile), a)| SessionQuartile {
            subject_id: r.subject_id.clone(),
            session_index: r.session_index,
            quartile,
            tied: adjusted.iter().filter(|b| *b == a).count() > 1,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EbqRow {
    pub subject_id: String,
    pub session_index: u32,
    pub pvt_quartile: Option<u8>,
    pub vwm_quartile: Option<u8>,
    pub mod_quartile: Option<u8>,
    pub average_quartile: f64,
    pub ebq: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EbqTable {
    /// Sorted by session.
    pub rows: Vec<EbqRow>,
    /// Sessions with no scored task.
    pub excluded: Vec<SessionKey>,
}

impl EbqTable {
    pub fn get(&self, subject_id: &str, session_index: u32) -> Option<u8> {
        self.rows
            .binary_search_by(|r| (r.subject_id.as_str(), r.session_index).cmp(&(subject_id, session_index)))
            .ok()
            .map(|i| self.rows[i].ebq)
    }
}

/// Averages each session's task quartiles and takes the quartile of that
/// average over all sessions. Sessions in `sessions` without any scored
/// task are excluded with a warning.
pub fn effective_behavior_quartile(
    records: &[PerformanceRecord],
    sessions: impl IntoIterator<Item = SessionKey>,
) -> Result<EbqTable> {
    let mut per_session: BTreeMap<SessionKey, [Option<u8>; 3]> = BTreeMap::new();
    for task in [Task::Pvt, Task::Vwm, Task::Mod] {
        let recs: Vec<PerformanceRecord> = records.iter().filter(|r| r.task == task).cloned().collect();
        if recs.is_empty() {
            continue;
        }
        let slot = match task {
            Task::Pvt => 0,
            Task::Vwm => 1,
            _ => 2,
        };
        for q in task_quartiles(&recs)? {
            let entry = per_session.entry((q.subject_id, q.session_index)).or_default();
            if entry[slot].replace(q.quartile).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate {task} score for a session")));
            }
        }
    }
    let mut excluded: Vec<SessionKey> = sessions
        .into_iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|k| !per_session.contains_key(k))
        .collect();
    excluded.dedup();
    for (s, i) in &excluded {
        warn!("session {s}/{i} has no scored task and gets no EBQ");
    }
    let averages: Vec<f64> = per_session
        .values()
        .map(|qs| {
            let present: Vec<f64> = qs.iter().flatten().map(|&q| q as f64).collect();
            present.iter().sum::<f64>() / present.len() as f64
        })
        .collect();
    let ebq = if averages.is_empty() { vec![] } else { rank_quartiles(&averages) };
    let rows = per_session
        .into_iter()
        .zip(averages)
        .zip(ebq)
        .map(|(((key, qs), average_quartile), ebq)| EbqRow {
            subject_id: key.0,
            session_index: key.1,
            pvt_quartile: qs[0],
            vwm_quartile: qs[1],
            mod_quartile: qs[2],
            average_quartile,
            ebq,
        })
        .collect();
    Ok(EbqTable { rows, excluded })
}

/// Tags each segment with its session's EBQ. REST segments are tagged only
/// when `include_rest` is set.
pub fn assign_ebq(segments: &mut [Segment], table: &EbqTable, include_rest: bool) {
    for s in segments {
        s.ebq = if s.label == Task::Rest && !include_rest {
            None
        } else {
            table.get(&s.subject_id, s.session_index)
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutcome {
    pub segment_id: String,
    pub subject_id: String,
    pub session_index: u32,
    pub true_label: Task,
    pub predicted: Task,
    pub correct: bool,
    pub ebq: Option<u8>,
}

impl PredictionOutcome {
    pub fn new(segment: &Segment, predicted: Task) -> Self {
        PredictionOutcome {
            segment_id: segment.id.clone(),
            subject_id: segment.subject_id.clone(),
            session_index: segment.session_index,
            true_label: segment.label,
            predicted,
            correct: segment.label == predicted,
            ebq: segment.ebq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectFraction {
    pub subject_id: String,
    pub total: usize,
    pub incorrect: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FractionReport {
    /// Sorted by subject.
    pub subjects: Vec<SubjectFraction>,
    /// Subjects with fewer than the minimum number of segments.
    pub excluded: Vec<String>,
}

impl FractionReport {
    pub fn get(&self, subject_id: &str) -> Option<f64> {
        self.subjects
            .iter()
            .find(|s| s.subject_id == subject_id)
            .map(|s| s.fraction)
    }
}

/// Per-subject fraction of incorrect predictions, for subjects with at
/// least `min_segments` outcomes.
pub fn fraction_incorrect(outcomes: &[PredictionOutcome], min_segments: usize) -> FractionReport {
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for o in outcomes {
        let c = counts.entry(&o.subject_id).or_default();
        c.0 += 1;
        c.1 += usize::from(!o.correct);
    }
    let mut report = FractionReport::default();
    for (subject, (total, incorrect)) in counts {
        if total >= min_segments {
            report.subjects.push(SubjectFraction {
                subject_id: subject.to_string(),
                total,
                incorrect,
                fraction: incorrect as f64 / total as f64,
            });
        } else {
            report.excluded.push(subject.to_string());
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianSplit {
    pub median: f64,
    pub well_predicted: Vec<String>,
    pub ill_predicted: Vec<String>,
}

/// Subjects at or below the median fraction are well-predicted, the rest
/// ill-predicted.
pub fn median_split(fractions: &[SubjectFraction]) -> Result<MedianSplit> {
    if fractions.len() < 2 {
        return Err(Error::Insufficient(format!(
            "median split needs at least 2 subjects, got {}",
            fractions.len()
        )));
    }
    let values: Vec<f64> = fractions.iter().map(|f| f.fraction).collect();
    let m = median(&values);
    let (well, ill): (Vec<_>, Vec<_>) = fractions.iter().partition(|f| f.fraction <= m);
    Ok(MedianSplit {
        median: m,
        well_predicted: well.into_iter().map(|f| f.subject_id.clone()).collect(),
        ill_predicted: ill.into_iter().map(|f| f.subject_id.clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
}

impl GroupStats {
    fn of(label: &str, values: &[f64]) -> Self {
        GroupStats {
            label: label.to_string(),
            n: values.len(),
            mean: mean(values),
            median: median(values),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub name: String,
    pub group_a: GroupStats,
    pub group_b: GroupStats,
    /// `None` when either group has fewer than 2 values or the test is degenerate.
    pub test: Option<WelchResult>,
}

impl Comparison {
    fn new(name: String, a_label: &str, a: &[f64], b_label: &str, b: &[f64]) -> Self {
        Comparison {
            name,
            group_a: GroupStats::of(a_label, a),
            group_b: GroupStats::of(b_label, b),
            test: welch_t(a, b).ok(),
        }
    }

    pub fn available(&self) -> bool {
        self.test.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparisonReport {
    pub comparisons: Vec<Comparison>,
    pub fractions: BTreeMap<String, FractionReport>,
    pub splits: BTreeMap<String, MedianSplit>,
    /// Correlation of per-subject incorrect fractions between the two models.
    pub fraction_correlation: Option<PearsonResult>,
}

impl GroupComparisonReport {
    pub fn get(&self, name: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.name == name)
    }
}

fn ebqs<'a>(it: impl IntoIterator<Item = &'a PredictionOutcome>) -> Vec<f64> {
    it.into_iter().filter_map(|o| o.ebq.map(f64::from)).collect()
}

/// Welch comparisons of segment EBQ between correct and incorrect
/// predictions, consistent groups across two models, well- and
/// ill-predicted subjects, and correct vs incorrect within each of those.
pub fn group_comparison_report(
    models: &[(&str, &[PredictionOutcome])],
    min_segments: usize,
) -> Result<GroupComparisonReport> {
    if models.is_empty() || models.len() > 2 {
        return Err(Error::InvalidArgument(format!(
            "group comparisons take one or two models, got {}",
            models.len()
        )));
    }
    let mut comparisons = Vec::new();
    let mut fractions = BTreeMap::new();
    let mut splits = BTreeMap::new();
    for &(name, outcomes) in models {
        let correct = ebqs(outcomes.iter().filter(|o| o.correct));
        let incorrect = ebqs(outcomes.iter().filter(|o| !o.correct));
        comparisons.push(Comparison::new(
            format!("{name}: correct vs incorrect"),
            "correct",
            &correct,
            "incorrect",
            &incorrect,
        ));

        let fr = fraction_incorrect(outcomes, min_segments);
        if let Ok(ms) = median_split(&fr.subjects) {
            let well: BTreeSet<&str> = ms.well_predicted.iter().map(String::as_str).collect();
            let ill: BTreeSet<&str> = ms.ill_predicted.iter().map(String::as_str).collect();
            let in_well = |o: &&PredictionOutcome| well.contains(o.subject_id.as_str());
            let in_ill = |o: &&PredictionOutcome| ill.contains(o.subject_id.as_str());
            comparisons.push(Comparison::new(
                format!("{name}: well vs ill predicted"),
                "well_predicted",
                &ebqs(outcomes.iter().filter(in_well)),
                "ill_predicted",
                &ebqs(outcomes.iter().filter(in_ill)),
            ));
            for (label, members) in [("well predicted", &well), ("ill predicted", &ill)] {
                let group: Vec<&PredictionOutcome> = outcomes
                    .iter()
                    .filter(|o| members.contains(o.subject_id.as_str()))
                    .collect();
                comparisons.push(Comparison::new(
                    format!("{name}: {label}, correct vs incorrect"),
                    "correct",
                    &ebqs(group.iter().copied().filter(|o| o.correct)),
                    "incorrect",
                    &ebqs(group.iter().copied().filter(|o| !o.correct)),
                ));
            }
            splits.insert(name.to_string(), ms);
        }
        fractions.insert(name.to_string(), fr);
    }

    let mut fraction_correlation = None;
    if let [(a_name, a), (b_name, b)] = models {
        let b_by_id: HashMap<&str, &PredictionOutcome> = b.iter().map(|o| (o.segment_id.as_str(), o)).collect();
        let shared: Vec<(&PredictionOutcome, &PredictionOutcome)> = a
            .iter()
            .filter_map(|o| b_by_id.get(o.segment_id.as_str()).map(|p| (o, *p)))
            .collect();
        let both_correct = ebqs(shared.iter().filter(|(x, y)| x.correct && y.correct).map(|(x, _)| *x));
        let both_wrong = ebqs(shared.iter().filter(|(x, y)| !x.correct && !y.correct).map(|(x, _)| *x));
        comparisons.push(Comparison::new(
            format!("{a_name} & {b_name}: consistent correct vs consistent incorrect"),
            "consistent_correct",
            &both_correct,
            "consistent_incorrect",
            &both_wrong,
        ));
        let fa = &fractions[*a_name];
        let fb = &fractions[*b_name];
        let (xs, ys): (Vec<f64>, Vec<f64>) = fa
            .subjects
            .iter()
            .filter_map(|s| fb.get(&s.subject_id).map(|f| (s.fraction, f)))
            .unzip();
        fraction_correlation = pearson_r(&xs, &ys).ok();
    }
    Ok(GroupComparisonReport {
        comparisons,
        fractions,
        splits,
        fraction_correlation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(subject: &str, session: u32, task: Task, score: f64) -> PerformanceRecord {
        PerformanceRecord::new(subject, session, task, score).unwrap()
    }

    #[test]
    fn record_validation() {
        assert!(PerformanceRecord::new("s", 1, Task::Vwm, 1.2).is_err());
        assert!(PerformanceRecord::new("s", 1, Task::Pvt, 0.0).is_err());
        assert!(PerformanceRecord::new("s", 1, Task::Rest, 0.5).is_err());
        assert_eq!(rec("s", 1, Task::Pvt, 300.0).direction(), Direction::LowerIsBetter);
    }

    #[test]
    fn eight_distinct_sessions_split_evenly() {
        let recs: Vec<_> = (0..8).map(|i| rec("s", i + 1, Task::Vwm, 0.1 * i as f64)).collect();
        let q = task_quartiles(&recs).unwrap();
        let mut counts = [0; 4];
        for s in &q {
            counts[s.quartile as usize - 1] += 1;
        }
        assert_eq!(counts, [2, 2, 2, 2]);
        assert!(q.iter().all(|s| !s.tied));
    }

    #[test]
    fn fastest_pvt_is_best() {
        let recs: Vec<_> = [200.0, 300.0, 400.0, 500.0]
            .iter()
            .enumerate()
            .map(|(i, &s)| rec("s", i as u32 + 1, Task::Pvt, s))
            .collect();
        let q: Vec<u8> = task_quartiles(&recs).unwrap().iter().map(|s| s.quartile).collect();
        assert_eq!(q, vec![4, 3, 2, 1]);
    }

    #[test]
    fn total_tie_is_bottom_quartile() {
        let recs: Vec<_> = (0..5).map(|i| rec("s", i + 1, Task::Mod, 0.5)).collect();
        let q = task_quartiles(&recs).unwrap();
        assert!(q.iter().all(|s| s.quartile == 1 && s.tied));
        assert!(task_quartiles(&recs[..3]).is_err());
    }

    #[test]
    fn quartiles_are_rank_based() {
        let scores = [0.3, 0.9, 0.1, 0.5, 0.5, 0.7, 0.2];
        let a = rank_quartiles(&scores);
        let b = rank_quartiles(&scores.map(|v: f64| (3.0 * v).exp() - 7.0));
        assert_eq!(a, b);
    }

    #[test]
    fn unanimous_sessions_take_extreme_ebq() {
        let mut recs = Vec::new();
        for (i, (pvt, acc)) in [(200.0, 0.95), (300.0, 0.8), (400.0, 0.7), (500.0, 0.5)].into_iter().enumerate() {
            let s = format!("sub{i}");
            recs.push(rec(&s, 1, Task::Pvt, pvt));
            recs.push(rec(&s, 1, Task::Vwm, acc));
            recs.push(rec(&s, 1, Task::Mod, acc));
        }
        let table = effective_behavior_quartile(&recs, [("sub9".to_string(), 1)]).unwrap();
        assert_eq!(table.get("sub0", 1), Some(4));
        assert_eq!(table.rows[0].average_quartile, 4.0);
        assert_eq!(table.get("sub3", 1), Some(1));
        assert_eq!(table.rows[3].average_quartile, 1.0);
        assert_eq!(table.excluded, vec![("sub9".to_string(), 1)]);
    }

    #[test]
    fn ebq_matches_brute_force_oracle() {
        // 12 sessions, some missing a task.
        let pvt = [310.0, 250.0, 420.0, 380.0, 290.0, 505.0, 333.0, 270.0, 455.0, 300.0, 360.0, 410.0];
        let vwm = [0.8, 0.9, 0.6, 0.7, 0.85, 0.5, 0.75, 0.95, 0.55, 0.8, 0.65, 0.6];
        let modt = [0.7, 0.8, 0.5, 0.75, 0.9, 0.4, 0.6, 0.85, 0.45, 0.7, 0.7, 0.55];
        let mut recs = Vec::new();
        for i in 0..12u32 {
            let s = format!("s{i:02}");
            if i % 5 != 3 {
                recs.push(rec(&s, 1, Task::Pvt, pvt[i as usize]));
            }
            recs.push(rec(&s, 1, Task::Vwm, vwm[i as usize]));
            if i % 4 != 1 {
                recs.push(rec(&s, 1, Task::Mod, modt[i as usize]));
            }
        }
        let table = effective_behavior_quartile(&recs, std::iter::empty()).unwrap();

        // Oracle: count strictly-better sessions pairwise, no sorting.
        let quart = |vals: &[(String, f64)], key: &str| -> u8 {
            let v = vals.iter().find(|(k, _)| k == key).unwrap().1;
            let below = vals.iter().filter(|(_, w)| *w < v).count();
            let mut q = 1;
            while q < 4 && below * 4 >= q * vals.len() {
                q += 1;
            }
            q as u8
        };
        let mut avg: Vec<(String, f64)> = Vec::new();
        for i in 0..12u32 {
            let s = format!("s{i:02}");
            let mut qs = Vec::new();
            for task in [Task::Pvt, Task::Vwm, Task::Mod] {
                let vals: Vec<(String, f64)> = recs
                    .iter()
                    .filter(|r| r.task == task)
                    .map(|r| (r.subject_id.clone(), r.adjusted()))
                    .collect();
                if vals.iter().any(|(k, _)| *k == s) {
                    qs.push(quart(&vals, &s) as f64);
                }
            }
            avg.push((s, qs.iter().sum::<f64>() / qs.len() as f64));
        }
        for (s, a) in &avg {
            let row = table.rows.iter().find(|r| &r.subject_id == s).unwrap();
            assert!((row.average_quartile - a).abs() < 1e-15);
            assert_eq!(row.ebq, quart(&avg, s), "{s}");
        }
    }

    fn outcome(subject: &str, id: usize, correct: bool, ebq: u8) -> PredictionOutcome {
        PredictionOutcome {
            segment_id: format!("{subject}/{id}"),
            subject_id: subject.into(),
            session_index: 1,
            true_label: Task::Dot,
            predicted: if correct { Task::Dot } else { Task::Rest },
            correct,
            ebq: Some(ebq),
        }
    }

    #[test]
    fn fractions_and_exclusion() {
        let mut o: Vec<_> = (0..12).map(|i| outcome("a", i, i >= 3, 2)).collect();
        o.extend((0..9).map(|i| outcome("b", i, false, 2)));
        o.extend((0..10).map(|i| outcome("c", i, true, 2)));
        let r = fraction_incorrect(&o, 10);
        assert_eq!(r.get("a"), Some(0.25));
        assert_eq!(r.get("c"), Some(0.0));
        assert_eq!(r.excluded, vec!["b".to_string()]);
    }

    fn fr(pairs: &[(&str, f64)]) -> Vec<SubjectFraction> {
        pairs
            .iter()
            .map(|(s, f)| SubjectFraction {
                subject_id: s.to_string(),
                total: 10,
                incorrect: 0,
                fraction: *f,
            })
            .collect()
    }

    #[test]
    fn median_split_cases() {
        let m = median_split(&fr(&[("a", 0.1), ("b", 0.2), ("c", 0.3), ("d", 0.4)])).unwrap();
        assert_eq!(m.median, 0.25);
        assert_eq!(m.well_predicted, vec!["a", "b"]);
        assert_eq!(m.ill_predicted, vec!["c", "d"]);

        let m = median_split(&fr(&[("a", 0.3), ("b", 0.3), ("c", 0.3)])).unwrap();
        assert_eq!(m.well_predicted.len(), 3);
        assert!(m.ill_predicted.is_empty());

        let vals = [("a", 0.5), ("b", 0.05), ("c", 0.3), ("d", 0.3), ("e", 0.9)];
        let m = median_split(&fr(&vals)).unwrap();
        let mut sorted = vals.to_vec();
        sorted.sort_by(|x, y| x.1.total_cmp(&y.1));
        let med = sorted[2].1;
        let want: Vec<&str> = vals.iter().filter(|v| v.1 <= med).map(|v| v.0).collect();
        assert_eq!(m.well_predicted, want);
        assert_eq!(m.well_predicted.len() + m.ill_predicted.len(), 5);
        assert!(median_split(&fr(&[("a", 0.1)])).is_err());
    }

    #[test]
    fn flat_ebq_gives_zero_t_everywhere() {
        let mut a = Vec::new();
        for s in 0..6 {
            for i in 0..12 {
                a.push(outcome(&format!("s{s}"), i, (i + s) % 3 != 0, 3));
            }
        }
        let b: Vec<_> = a
            .iter()
            .map(|o| PredictionOutcome {
                correct: !o.correct || o.segment_id.ends_with('0'),
                ..o.clone()
            })
            .collect();
        let report = group_comparison_report(&[("cnn", &a), ("bilstm", &b)], 10).unwrap();
        assert!(!report.comparisons.is_empty());
        for c in &report.comparisons {
            if let Some(t) = c.test {
                assert_eq!(t.t, 0.0, "{}", c.name);
            }
        }
    }

    #[test]
    fn consistent_groups_are_intersections() {
        let a = vec![
            outcome("s", 0, true, 4),
            outcome("s", 1, true, 3),
            outcome("s", 2, false, 1),
            outcome("s", 3, false, 2),
            outcome("s", 4, true, 2),
        ];
        let mut b = a.clone();
        b[1].correct = false;
        b[3].correct = true;
        b.push(outcome("t", 9, true, 1));
        let report = group_comparison_report(&[("x", &a), ("y", &b)], 1).unwrap();
        let c = report.get("x & y: consistent correct vs consistent incorrect").unwrap();
        assert_eq!(c.group_a.n, 2);
        assert_eq!(c.group_a.mean, 3.0);
        assert_eq!(c.group_b.n, 1);
        assert!(!c.available());
    }

    #[test]
    fn planted_coupling_is_detected() {
        // Correctness probability rises with EBQ.
        let mut o = Vec::new();
        for i in 0..400 {
            let ebq = (i % 4 + 1) as u8;
            let correct = (i * 7919 % 100) < 40 + 15 * ebq as usize;
            o.push(outcome(&format!("s{}", i % 20), i, correct, ebq));
        }
        let r = group_comparison_report(&[("cnn", &o)], 10).unwrap();
        let c = r.get("cnn: correct vs incorrect").unwrap();
        assert!(c.group_a.mean > c.group_b.mean);
        assert!(c.test.unwrap().p < 0.05);
    }
}
