use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{N_CHANNELS, N_CORTICAL, N_NETWORKS};

/// Partition of the 214 channels into networks N1..N17.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkGrouping {
    /// `groups[k]` holds the sorted channels of network `N{k+1}`.
    groups: Vec<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
struct GroupingRow {
    channel_index: usize,
    network_id: String,
}

pub fn network_name(k: usize) -> String {
    format!("N{}", k + 1)
}

fn parse_network_id(id: &str) -> Option<usize> {
    let n: usize = id.trim().strip_prefix('N')?.parse().ok()?;
    (1..=N_NETWORKS).contains(&n).then(|| n - 1)
}

impl NetworkGrouping {
    /// Validates that N1..N16 partition the cortical channels and N17 holds
    /// exactly the subcortical ones.
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        if groups.len() != N_NETWORKS {
            return Err(Error::InvalidArgument(format!(
                "expected {N_NETWORKS} networks, got {}",
                groups.len()
            )));
        }
        let mut owner = [None; N_CHANNELS];
        let mut groups = groups;
        for (k, g) in groups.iter_mut().enumerate() {
            g.sort_unstable();
            for &ch in g.iter() {
                if ch >= N_CHANNELS {
                    return Err(Error::InvalidArgument(format!("channel {ch} out of range")));
                }
                if let Some(prev) = owner[ch].replace(k) {
                    return Err(Error::InvalidArgument(format!(
                        "channel {ch} listed in both {} and {}",
                        network_name(prev),
                        network_name(k)
                    )));
                }
            }
        }
        if let Some(ch) = owner.iter().position(Option::is_none) {
            return Err(Error::InvalidArgument(format!("channel {ch} belongs to no network")));
        }
        let subcortical: Vec<usize> = (N_CORTICAL..N_CHANNELS).collect();
        if groups[N_NETWORKS - 1] != subcortical {
            return Err(Error::InvalidArgument(format!(
                "{} must be exactly channels {N_CORTICAL}..{N_CHANNELS}",
                network_name(N_NETWORKS - 1)
            )));
        }
        if let Some(k) = groups.iter().position(Vec::is_empty) {
            return Err(Error::InvalidArgument(format!("{} is empty", network_name(k))));
        }
        Ok(NetworkGrouping { groups })
    }

    /// Stand-in layout for synthetic data: each cortical network takes half
    /// its regions from each hemisphere (channels 0..100 and 100..200).
    pub fn synthetic() -> Self {
        const SIZES: [usize; 16] = [14, 16, 14, 12, 12, 10, 12, 10, 12, 14, 12, 10, 16, 14, 10, 12];
        let half = N_CORTICAL / 2;
        let (mut lh, mut rh) = (0, half);
        let mut groups = Vec::with_capacity(N_NETWORKS);
        for size in SIZES {
            let mut g: Vec<usize> = (lh..lh + size / 2).collect();
            g.extend(rh..rh + size / 2);
            lh += size / 2;
            rh += size / 2;
            groups.push(g);
        }
        groups.push((N_CORTICAL..N_CHANNELS).collect());
        NetworkGrouping::new(groups).expect("synthetic layout is a valid partition")
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group(&self, k: usize) -> &[usize] {
        &self.groups[k]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn network_of(&self, channel: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.binary_search(&channel).is_ok())
    }
}

/// Reads a `channel_index,network_id` CSV.
pub fn load_grouping(path: &Path) -> Result<NetworkGrouping> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                Error::MissingArtifact(path.to_path_buf())
            }
            _ => Error::data(path, e.to_string()),
        })?;
    let mut groups = vec![Vec::new(); N_NETWORKS];
    for (i, rec) in rdr.deserialize::<GroupingRow>().enumerate() {
        let row = rec.map_err(|e| Error::data(path, format!("row {}: {e}", i + 1)))?;
        let k = parse_network_id(&row.network_id).ok_or_else(|| {
            Error::data(path, format!("row {}: unknown network id `{}`", i + 1, row.network_id))
        })?;
        groups[k].push(row.channel_index);
    }
    NetworkGrouping::new(groups).map_err(|e| Error::data(path, e.to_string()))
}

pub fn write_grouping(path: &Path, grouping: &NetworkGrouping) -> Result<()> {
    let mut rows: Vec<(usize, usize)> = grouping
        .groups
        .iter()
        .enumerate()
        .flat_map(|(k, g)| g.iter().map(move |&ch| (ch, k)))
        .collect();
    rows.sort_unstable();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    w.write_record(["channel_index", "network_id"])?;
    for (ch, k) in rows {
        w.write_record([ch.to_string(), network_name(k)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_layout_partitions_all_channels() {
        let g = NetworkGrouping::synthetic();
        assert_eq!(g.len(), 17);
        assert_eq!(g.sizes().iter().sum::<usize>(), 214);
        assert_eq!(g.group(16), &(200..214).collect::<Vec<_>>()[..]);
        assert_eq!(g.network_of(0), Some(0));
        assert_eq!(g.network_of(100), Some(0));
        assert_eq!(g.network_of(213), Some(16));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let g = NetworkGrouping::synthetic();
        write_grouping(&p, &g).unwrap();
        assert_eq!(load_grouping(&p).unwrap(), g);
    }

    fn rows(g: &NetworkGrouping) -> Vec<(usize, String)> {
        let mut r: Vec<(usize, String)> = (0..214).map(|ch| (ch, network_name(g.network_of(ch).unwrap()))).collect();
        r.sort();
        r
    }

    fn write_rows(path: &Path, rows: &[(usize, String)]) {
        let mut s = String::from("channel_index,network_id\n");
        for (ch, id) in rows {
            s.push_str(&format!("{ch},{id}\n"));
        }
        std::fs::write(path, s).unwrap();
    }

    #[test]
    fn invalid_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let good = rows(&NetworkGrouping::synthetic());

        let mut dup = good.clone();
        dup.push(good[3].clone());
        write_rows(&p, &dup);
        assert!(load_grouping(&p).is_err());

        let mut gap = good.clone();
        gap.remove(42);
        write_rows(&p, &gap);
        assert!(load_grouping(&p).is_err());

        let mut unknown = good.clone();
        unknown[0].1 = "N18".into();
        write_rows(&p, &unknown);
        assert!(load_grouping(&p).is_err());

        let mut cortical_in_sub = good.clone();
        cortical_in_sub[0].1 = "N17".into();
        write_rows(&p, &cortical_in_sub);
        assert!(load_grouping(&p).is_err());

        write_rows(&p, &good);
        assert!(load_grouping(&p).is_ok());
    }
}
