use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Segment, Task};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.validation, self.test];
        if f.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidArgument(format!("split fractions must be positive, got {f:?}")));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split fractions must sum to 1, got {f:?}")));
        }
        Ok(())
    }

    fn fractions(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }
}

/// Segment indices per split, each list ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    /// Achieved (train, validation, test) fractions by segment count.
    pub achieved: [f64; 3],
}

const TRAIN: usize = 0;
const VALIDATION: usize = 1;
const TEST: usize = 2;

/// Assigns whole (subject, task) groups to splits, class by class.
///
/// Groups are shuffled by seed; the first three seed test, validation and
/// train, and each later group goes to the split furthest below its target
/// segment count for that class.
pub fn split(segments: &[Segment], spec: &SplitSpec) -> Result<SplitAssignment> {
    spec.validate()?;
    let targets = spec.fractions();
    let mut by_class: BTreeMap<Task, BTreeMap<&str, Vec<usize>>> = BTreeMap::new();
    for (i, s) in segments.iter().enumerate() {
        by_class
            .entry(s.label)
            .or_default()
            .entry(s.subject_id.as_str())
            .or_default()
            .push(i);
    }
    let mut buckets: [Vec<usize>; 3] = Default::default();
    for (task, groups) in by_class {
        if groups.len() < 3 {
            return Err(Error::Insufficient(format!(
                "class {task} has {} (subject, task) group(s); at least 3 are needed",
                groups.len()
            )));
        }
        let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
        let mut rng = seed::rng(spec.seed, &[seed::hash_str("split"), task.index() as u64]);
        groups.shuffle(&mut rng);
        let total: usize = groups.iter().map(Vec::len).sum();
        let mut counts = [0usize; 3];
        for (k, g) in groups.into_iter().enumerate() {
            let dest = match k {
                0 => TEST,
                1 => VALIDATION,
                2 => TRAIN,
                _ => (0..3)
                    .max_by(|&a, &b| {
                        let da = targets[a] * total as f64 - counts[a] as f64;
                        let db = targets[b] * total as f64 - counts[b] as f64;
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("three splits"),
            };
            counts[dest] += g.len();
            buckets[dest].extend(g);
        }
    }
    for b in &mut buckets {
        b.sort_unstable();
    }
    let n = segments.len().max(1) as f64;
    let achieved = [0, 1, 2].map(|k| buckets[k].len() as f64 / n);
    let [train, validation, test] = buckets;
    Ok(SplitAssignment {
        train,
        validation,
        test,
        achieved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashMap, HashSet};

    fn seg(subject: &str, task: Task) -> Segment {
        Segment {
            id: String::new(),
            data: vec![],
            len: 0,
            channels: 0,
            label: task,
            subject_id: subject.into(),
            session_index: 1,
            start: 0,
            pad_count: 0,
            ebq: None,
        }
    }

    fn corpus(subjects: usize, per_group: impl Fn(usize, usize) -> usize) -> Vec<Segment> {
        let mut v = Vec::new();
        for s in 0..subjects {
            for t in Task::ALL {
                for _ in 0..per_group(s, t.index()) {
                    v.push(seg(&format!("sub{s:02}"), t));
                }
            }
        }
        v
    }

    fn owner(a: &SplitAssignment) -> HashMap<usize, usize> {
        let mut m = HashMap::new();
        for (k, list) in [&a.train, &a.validation, &a.test].into_iter().enumerate() {
            for &i in list {
                assert!(m.insert(i, k).is_none(), "segment {i} assigned twice");
            }
        }
        m
    }

    #[test]
    fn groups_never_straddle() {
        let segs = corpus(10, |s, t| 1 + (s * 7 + t * 3) % 5);
        for seed in 0..20 {
            let a = split(&segs, &SplitSpec { seed, ..Default::default() }).unwrap();
            let own = owner(&a);
            assert_eq!(own.len(), segs.len());
            let mut seen: HashMap<(&str, Task), usize> = HashMap::new();
            for (i, s) in segs.iter().enumerate() {
                let k = *seen.entry((s.subject_id.as_str(), s.label)).or_insert(own[&i]);
                assert_eq!(k, own[&i]);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let segs = corpus(10, |_, _| 3);
        let spec = SplitSpec { seed: 9, ..Default::default() };
        assert_eq!(split(&segs, &spec).unwrap(), split(&segs, &spec).unwrap());
        let other = split(&segs, &SplitSpec { seed: 10, ..Default::default() }).unwrap();
        assert_ne!(split(&segs, &spec).unwrap().test, other.test);
    }

    #[test]
    fn achieved_fractions_near_targets() {
        // 30 subjects x 6 tasks with 4..7 segments per group: about 1000 segments.
        let segs = corpus(30, |s, t| 4 + (s * 5 + t) % 4);
        assert!((950..=1100).contains(&segs.len()));
        let a = split(&segs, &SplitSpec::default()).unwrap();
        for (got, want) in a.achieved.iter().zip([0.7, 0.1, 0.2]) {
            assert!((got - want).abs() <= 0.05, "{:?}", a.achieved);
        }
        let classes: HashSet<Task> = a.validation.iter().map(|&i| segs[i].label).collect();
        assert_eq!(classes.len(), 6);
    }

    #[test]
    fn starved_class_is_named() {
        let mut segs = corpus(5, |_, _| 2);
        segs.retain(|s| s.label != Task::Dyn || s.subject_id < "sub02".to_string());
        match split(&segs, &SplitSpec::default()) {
            Err(Error::Insufficient(msg)) => assert!(msg.contains("DYN")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_fractions() {
        let spec = SplitSpec { train: 0.5, ..Default::default() };
        assert!(split(&[], &spec).is_err());
    }
}
