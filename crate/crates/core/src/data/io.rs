//! On-disk formats.
//!
//! A dataset directory holds `manifest.csv` with header
//! `subject_id,session_index,task,file,performance_score` and one series file
//! per row, either CSV (rows = time, columns = regions, no header) or the
//! binary format:
//!
//! ```text
//! magic  8 bytes "NSSERIES"
//! T      u32 little-endian
//! C      u32 little-endian
//! data   T*C f64 little-endian, row-major
//! ```

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::{SessionRecording, Task};
use crate::behavior::PerformanceRecord;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};
use crate::N_CHANNELS;

pub const SERIES_MAGIC: &[u8; 8] = b"NSSERIES";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub subject_id: String,
    pub session_index: u32,
    pub task: Task,
    pub file: String,
    pub performance_score: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    /// Sorted by (subject, session, task).
    pub recordings: Vec<SessionRecording>,
    pub performance: Vec<PerformanceRecord>,
    /// Manifest files that did not exist; their rows are skipped.
    pub missing: Vec<PathBuf>,
}

pub fn read_series_binary(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != SERIES_MAGIC {
        return Err(Error::data(path, "not a series file (bad magic)"));
    }
    let t = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let c = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() != t * c * 8 {
        return Err(Error::data(
            path,
            format!("header says {t}x{c} values but body has {} bytes", body.len()),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")) as Real)
        .collect();
    Tensor::from_vec(&[t, c], data)
}

pub fn write_series_binary(path: &Path, series: &Tensor) -> Result<()> {
    let (t, c) = match *series.shape() {
        [t, c] => (t, c),
        _ => return Err(Error::shape("series", "rank", 2, series.shape().len())),
    };
    let mut out = Vec::with_capacity(16 + t * c * 8);
    out.extend_from_slice(SERIES_MAGIC);
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    for &v in series.data() {
        out.extend_from_slice(&(v as f64).to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_series_csv(path: &Path) -> Result<Tensor> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::data(path, e.to_string()))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(path, e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            // A non-numeric first line is a header.
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::data(path, format!("row {}: {e}", i + 1))),
        };
        match cols {
            None => cols = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(Error::data(
                    path,
                    format!("row {} has {} columns, expected {c}", i + 1, values.len()),
                ))
            }
            _ => {}
        }
        data.extend(values.into_iter().map(|v| v as Real));
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::data(path, "no data rows"))?;
    Tensor::from_vec(&[rows, cols], data)
}

pub fn write_series_csv(path: &Path, series: &Tensor) -> Result<()> {
    let c = match *series.shape() {
        [_, c] => c,
        _ => return Err(Error::shape("series", "rank", 2, series.shape().len())),
    };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for row in series.data().chunks_exact(c) {
        let line: Vec<String> = row.iter().map(|v| format!("{:?}", *v as f64)).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a series file, choosing the format by extension (`.csv` or binary).
pub fn read_series(path: &Path) -> Result<Tensor> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_series_csv(path)
    } else {
        read_series_binary(path)
    }
}

fn parse_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                Error::MissingArtifact(path.to_path_buf())
            }
            _ => Error::data(path, e.to_string()),
        })?;
    let headers = rdr.headers().map_err(|e| Error::data(path, e.to_string()))?.clone();
    let expected = ["subject_id", "session_index", "task", "file", "performance_score"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::data(
            path,
            format!("manifest header must be `{}`", expected.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<ManifestRow>().enumerate() {
        let row = rec.map_err(|e| Error::data(path, format!("row {}: {e}", i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Loads every recording listed in `<dir>/manifest.csv`.
pub fn load_recordings(dir: &Path) -> Result<LoadedData> {
    let manifest = dir.join("manifest.csv");
    let rows = parse_manifest(&manifest)?;
    let mut seen = HashSet::new();
    let mut recordings = Vec::new();
    let mut performance = Vec::new();
    let mut missing = Vec::new();
    for row in rows {
        let key = (row.subject_id.clone(), row.session_index, row.task);
        if !seen.insert(key) {
            return Err(Error::data(
                &manifest,
                format!(
                    "duplicate recording {}/{}/{}",
                    row.subject_id, row.session_index, row.task
                ),
            ));
        }
        if let Some(score) = row.performance_score {
            if !row.task.is_scored() {
                return Err(Error::data(
                    &manifest,
                    format!("{} rows carry no performance score", row.task),
                ));
            }
            let rec = PerformanceRecord::new(row.subject_id.clone(), row.session_index, row.task, score)
                .map_err(|e| Error::data(&manifest, e.to_string()))?;
            performance.push(rec);
        }
        let file = dir.join(&row.file);
        if !file.exists() {
            warn!("manifest row {}/{}/{}: missing {}", row.subject_id, row.session_index, row.task, file.display());
            missing.push(file);
            continue;
        }
        let series = read_series(&file)?;
        if series.shape()[1] != N_CHANNELS {
            return Err(Error::data(
                &file,
                format!("expected {N_CHANNELS} channels, found {}", series.shape()[1]),
            ));
        }
        if series.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::data(&file, "series contains non-finite values"));
        }
        let rec = SessionRecording::new(row.subject_id, row.session_index, row.task, series)
            .map_err(|e| Error::data(&file, e.to_string()))?;
        recordings.push(rec);
    }
    recordings.sort_by(|a, b| {
        (&a.subject_id, a.session_index, a.task).cmp(&(&b.subject_id, b.session_index, b.task))
    });
    performance.sort_by(|a, b| {
        (&a.subject_id, a.session_index, a.task).cmp(&(&b.subject_id, b.session_index, b.task))
    });
    Ok(LoadedData {
        recordings,
        performance,
        missing,
    })
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    w.write_record(["subject_id", "session_index", "task", "file", "performance_score"])?;
    for r in rows {
        w.write_record([
            r.subject_id.clone(),
            r.session_index.to_string(),
            r.task.name().to_string(),
            r.file.clone(),
            r.performance_score.map(|s| format!("{s:?}")).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
