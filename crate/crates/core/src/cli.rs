//! The `neurostate` command-line front end.
//!
//! Every command writes into its own run directory under the output root
//! (`synth`, `train-<model>`, `evaluate-<model>`, `importance-<model>`,
//! `behavior`, `report`). Run directories are write-once: outputs are staged
//! in `<dir>.partial` and renamed into place only when the command succeeds.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::behavior::{
    assign_ebq, effective_behavior_quartile, group_comparison_report, EbqTable, GroupComparisonReport,
    PredictionOutcome,
};
use crate::config::{Overrides, RunConfig, OUTPUT_ROOT_ENV};
use crate::data::{load_grouping, load_recordings, prepare_segments, split, LabeledSet, Segment, SplitAssignment, Task};
use crate::error::{Error, Result};
use crate::importance::{compute_importance, summarize, ImportanceReport, ImportanceSummary};
use crate::metrics::{confusion, ClassMetrics, ConfusionMatrix};
use crate::models::{load_checkpoint, save_checkpoint, Model, ModelConfig, ModelKind};
use crate::synth::{generate, write_dataset, SeriesFormat};
use crate::training::{grid_search, predict_set, train_model, LeaderboardEntry};

#[derive(Debug, Parser)]
#[command(name = "neurostate", version, about = "Task-state classification of multichannel BOLD time series")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed; required here or in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output root; overrides the config file and NEUROSTATE_OUTPUT_ROOT.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Dataset directory containing manifest.csv.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Network grouping CSV.
    #[arg(long, global = true)]
    pub grouping: Option<PathBuf>,
    /// Model checkpoint for evaluate and importance.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Model kind: cnn or bilstm.
    #[arg(long, global = true)]
    pub model: Option<ModelKind>,
    /// Override any config key, e.g. `--set train.max_epochs=50`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with ground truth.
    Synth {
        /// Series file format: binary or csv.
        #[arg(long, value_parser = parse_format)]
        format: Option<SeriesFormat>,
    },
    /// Train one model (or run the hyperparameter grid).
    Train {
        #[arg(long)]
        grid: bool,
    },
    /// Confusion matrix, metrics and per-segment outcomes on the test split.
    Evaluate,
    /// Grouped permutation importance on the test split.
    Importance,
    /// EBQ table and group comparisons from one or two evaluated models.
    Behavior {
        /// Models whose evaluate outputs to use (default: all evaluated).
        #[arg(long, value_delimiter = ',')]
        models: Vec<ModelKind>,
    },
    /// Index every run directory and collect plot-ready CSVs.
    Report,
}

fn parse_format(s: &str) -> std::result::Result<SeriesFormat, String> {
    match s.to_ascii_lowercase().as_str() {
        "binary" | "bin" => Ok(SeriesFormat::Binary),
        "csv" => Ok(SeriesFormat::Csv),
        other => Err(format!("unknown series format `{other}`")),
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Data { .. }
        | Error::Insufficient(_)
        | Error::MissingArtifact(_)
        | Error::InvalidArgument(_)
        | Error::Io { .. }
        | Error::Csv(_)
        | Error::Json(_) => 3,
        Error::NonFinite(_) | Error::Shape { .. } | Error::NoForwardRecord | Error::MissingGrad(_) => 4,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Config(_) => "config",
        Error::Data { .. } => "data",
        Error::Insufficient(_) => "insufficient_data",
        Error::MissingArtifact(_) => "missing_artifact",
        Error::InvalidArgument(_) => "invalid_argument",
        Error::Io { .. } => "io",
        Error::Csv(_) => "csv",
        Error::Json(_) => "json",
        Error::NonFinite(_) => "non_finite",
        Error::Shape { .. } => "shape",
        Error::NoForwardRecord | Error::MissingGrad(_) => "autodiff",
    }
}

/// One-line JSON description of an error, as printed to stderr.
pub fn error_json(err: &Error) -> String {
    let mut v = serde_json::json!({
        "error": error_kind(err),
        "message": err.to_string(),
        "exit_code": exit_code(err),
    });
    if let Error::MissingArtifact(p) | Error::Data { path: p, .. } = err {
        v["path"] = serde_json::Value::String(p.display().to_string());
    }
    v.to_string()
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code(&e)
        }
    }
}

/// Resolves the configuration for `cli`.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut o = Overrides {
        output_root_env: std::env::var(OUTPUT_ROOT_ENV).ok(),
        set: cli.set.clone(),
        seed: cli.seed,
        output_dir: cli.output_dir.clone(),
        data_dir: cli.data_dir.clone(),
        grouping: cli.grouping.clone(),
        checkpoint: cli.checkpoint.clone(),
        model: cli.model,
        ..Default::default()
    };
    match &cli.command {
        Command::Synth { format } => o.series_format = *format,
        Command::Train { grid } if *grid => o.grid_search = Some(true),
        _ => {}
    }
    RunConfig::load(cli.config.as_deref(), &o)
}

/// Runs the parsed command and returns its run directory.
pub fn execute(cli: &Cli) -> Result<PathBuf> {
    let cfg = resolve_config(cli)?;
    let kind = cfg.model;
    let name = match &cli.command {
        Command::Synth { .. } => "synth".to_string(),
        Command::Train { .. } => format!("train-{}", kind.name()),
        Command::Evaluate => format!("evaluate-{}", kind.name()),
        Command::Importance => format!("importance-{}", kind.name()),
        Command::Behavior { .. } => "behavior".to_string(),
        Command::Report => "report".to_string(),
    };
    let run = RunDir::create(&cfg.output_dir, &name)?;
    let start = Instant::now();
    match &cli.command {
        Command::Synth { .. } => cmd_synth(&cfg, run.path())?,
        Command::Train { .. } => cmd_train(&cfg, run.path())?,
        Command::Evaluate => cmd_evaluate(&cfg, run.path())?,
        Command::Importance => cmd_importance(&cfg, run.path())?,
        Command::Behavior { models } => cmd_behavior(&cfg, models, run.path())?,
        Command::Report => cmd_report(&cfg, run.path())?,
    }
    write_text(&run.path().join("config.toml"), &cfg.to_toml()?)?;
    write_json(
        &run.path().join("timing.json"),
        &serde_json::json!({ "command": name, "wall_time_secs": start.elapsed().as_secs_f64() }),
    )?;
    run.finish()
}

struct RunDir {
    staging: PathBuf,
    target: PathBuf,
    done: bool,
}

impl RunDir {
    fn create(root: &Path, name: &str) -> Result<RunDir> {
        let target = root.join(name);
        if target.exists() {
            return Err(Error::Config(format!(
                "run directory {} already exists; outputs are write-once",
                target.display()
            )));
        }
        let staging = root.join(format!("{name}.partial"));
        if staging.exists() {
            std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        std::fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        Ok(RunDir {
            staging,
            target,
            done: false,
        })
    }

    fn path(&self) -> &Path {
        &self.staging
    }

    fn finish(mut self) -> Result<PathBuf> {
        std::fs::rename(&self.staging, &self.target).map_err(|e| Error::io(&self.target, e))?;
        self.done = true;
        Ok(self.target.clone())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if !self.done {
            let _ = std::fs::remove_dir_all(&self.staging);
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::data(path, e.to_string()))
}

/// Segments, EBQ table and split of the configured dataset.
pub struct Prepared {
    pub segments: Vec<Segment>,
    pub ebq: EbqTable,
    pub split: SplitAssignment,
}

impl Prepared {
    pub fn set(&self, indices: &[usize]) -> Result<LabeledSet> {
        LabeledSet::from_segments(indices.iter().map(|&i| &self.segments[i]))
    }
}

fn load_ebq(cfg: &RunConfig, data: &crate::data::LoadedData) -> EbqTable {
    let sessions = data.recordings.iter().map(|r| (r.subject_id.clone(), r.session_index));
    match effective_behavior_quartile(&data.performance, sessions) {
        Ok(t) => t,
        Err(e) => {
            warn!("no EBQ table for {}: {e}", cfg.data_dir().display());
            EbqTable::default()
        }
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let data = load_recordings(&cfg.data_dir())?;
    let mut segments = prepare_segments(&data.recordings);
    let ebq = load_ebq(cfg, &data);
    assign_ebq(&mut segments, &ebq, cfg.ebq.include_rest);
    let split = split(&segments, &cfg.split)?;
    info!(
        "{} segments; split fractions {:.3}/{:.3}/{:.3}",
        segments.len(),
        split.achieved[0],
        split.achieved[1],
        split.achieved[2]
    );
    Ok(Prepared { segments, ebq, split })
}

fn load_model(cfg: &RunConfig) -> Result<Model> {
    let path = cfg.checkpoint_path(cfg.model);
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    let model = load_checkpoint(&path)?;
    if model.kind() != cfg.model {
        return Err(Error::Config(format!(
            "checkpoint {} holds a {} model, config asks for {}",
            path.display(),
            model.kind().name(),
            cfg.model.name()
        )));
    }
    Ok(model)
}

fn cmd_synth(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let ds = generate(&cfg.synth)?;
    info!("generated {} recordings", ds.recordings.len());
    write_dataset(&ds, dir, cfg.series_format)
}

#[derive(Serialize)]
struct SplitRecord<'a> {
    achieved: [f64; 3],
    train: Vec<&'a str>,
    validation: Vec<&'a str>,
    test: Vec<&'a str>,
}

fn cmd_train(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let p = prepare(cfg)?;
    let train = p.set(&p.split.train)?;
    let val = p.set(&p.split.validation)?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| p.segments[i].id.as_str()).collect();
    write_json(
        &dir.join("split.json"),
        &SplitRecord {
            achieved: p.split.achieved,
            train: ids(&p.split.train),
            validation: ids(&p.split.validation),
            test: ids(&p.split.test),
        },
    )?;
    let seed = cfg.model_seed(cfg.model);
    let (model, report, board): (Model, _, Vec<LeaderboardEntry>) = if cfg.grid_search {
        grid_search(cfg.model, seed, &cfg.train, &train, &val)?
    } else {
        let (m, r) = train_model(ModelConfig::new(cfg.model, seed), &train, &val, &cfg.train)?;
        (m, r, Vec::new())
    };
    save_checkpoint(&model, &dir.join("model.nsm"))?;
    write_json(&dir.join("model_summary.json"), &model.summary())?;
    report.write_json(&dir.join("train_report.json"))?;
    report.write_curves_csv(&dir.join("curves.csv"))?;
    if cfg.grid_search {
        write_json(&dir.join("leaderboard.json"), &board)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct EvaluationRecord {
    model: ModelKind,
    metrics: ClassMetrics,
    confusion: ConfusionMatrix,
}

fn write_outcomes_csv(path: &Path, outcomes: &[PredictionOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    w.write_record(["segment_id", "subject_id", "session_index", "true_label", "predicted", "correct", "ebq"])?;
    for o in outcomes {
        w.write_record([
            o.segment_id.clone(),
            o.subject_id.clone(),
            o.session_index.to_string(),
            o.true_label.to_string(),
            o.predicted.to_string(),
            o.correct.to_string(),
            o.ebq.map(|q| q.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn cmd_evaluate(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let model = load_model(cfg)?;
    let p = prepare(cfg)?;
    let test = p.set(&p.split.test)?;
    let pred = predict_set(&model, &test)?;
    let cm = confusion(&test.labels, &pred)?;
    let metrics = cm.metrics();
    info!("test accuracy {:.4}", metrics.accuracy);
    let outcomes: Vec<PredictionOutcome> = p
        .split
        .test
        .iter()
        .zip(&pred)
        .map(|(&i, &y)| PredictionOutcome::new(&p.segments[i], Task::ALL[y]))
        .collect();
    cm.write_csv(&dir.join("confusion.csv"))?;
    write_json(
        &dir.join("metrics.json"),
        &EvaluationRecord {
            model: cfg.model,
            metrics,
            confusion: cm,
        },
    )?;
    write_json(&dir.join("outcomes.json"), &outcomes)?;
    write_outcomes_csv(&dir.join("outcomes.csv"), &outcomes)
}

#[derive(Serialize)]
struct ImportanceRecord<'a> {
    model: ModelKind,
    report: &'a ImportanceReport,
    summary: ImportanceSummary,
}

fn cmd_importance(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let model = load_model(cfg)?;
    let grouping_path = cfg.grouping_path();
    if !grouping_path.exists() {
        return Err(Error::MissingArtifact(grouping_path));
    }
    let grouping = load_grouping(&grouping_path)?;
    let p = prepare(cfg)?;
    let test = p.set(&p.split.test)?;
    let report = compute_importance(&model, &test, &grouping, &cfg.noise)?;
    write_json(
        &dir.join("importance.json"),
        &ImportanceRecord {
            model: cfg.model,
            report: &report,
            summary: summarize(&report),
        },
    )?;
    report.write_overall_csv(&dir.join("importance_overall.csv"))?;
    report.write_per_task_csv(&dir.join("importance_per_task.csv"), false)?;
    report.write_per_task_csv(&dir.join("importance_per_task_normalized.csv"), true)
}

fn write_ebq_csv(path: &Path, table: &EbqTable) -> Result<()> {
    let q = |v: Option<u8>| v.map(|q| q.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    w.write_record([
        "subject_id",
        "session_index",
        "pvt_quartile",
        "vwm_quartile",
        "mod_quartile",
        "average_quartile",
        "ebq",
    ])?;
    for r in &table.rows {
        w.write_record([
            r.subject_id.clone(),
            r.session_index.to_string(),
            q(r.pvt_quartile),
            q(r.vwm_quartile),
            q(r.mod_quartile),
            r.average_quartile.to_string(),
            r.ebq.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_comparisons_csv(path: &Path, report: &GroupComparisonReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    w.write_record([
        "comparison", "group_a", "n_a", "mean_a", "median_a", "group_b", "n_b", "mean_b", "median_b", "t", "p",
        "dof",
    ])?;
    for c in &report.comparisons {
        let (t, p, dof) = match c.test {
            Some(r) => (r.t.to_string(), r.p.to_string(), r.dof.to_string()),
            None => Default::default(),
        };
        w.write_record([
            c.name.clone(),
            c.group_a.label.clone(),
            c.group_a.n.to_string(),
            c.group_a.mean.to_string(),
            c.group_a.median.to_string(),
            c.group_b.label.clone(),
            c.group_b.n.to_string(),
            c.group_b.mean.to_string(),
            c.group_b.median.to_string(),
            t,
            p,
            dof,
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_fractions_csv(path: &Path, report: &GroupComparisonReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    w.write_record(["model", "subject_id", "total", "incorrect", "fraction", "group"])?;
    for (model, fr) in &report.fractions {
        let split = report.splits.get(model);
        for s in &fr.subjects {
            let group = match split {
                Some(ms) if ms.well_predicted.contains(&s.subject_id) => "well_predicted",
                Some(_) => "ill_predicted",
                None => "",
            };
            w.write_record([
                model.clone(),
                s.subject_id.clone(),
                s.total.to_string(),
                s.incorrect.to_string(),
                s.fraction.to_string(),
                group.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn cmd_behavior(cfg: &RunConfig, models: &[ModelKind], dir: &Path) -> Result<()> {
    let outcomes_path = |k: ModelKind| {
        cfg.output_dir
            .join(format!("evaluate-{}", k.name()))
            .join("outcomes.json")
    };
    let kinds: Vec<ModelKind> = if models.is_empty() {
        let found: Vec<ModelKind> = [ModelKind::Cnn, ModelKind::Bilstm]
            .into_iter()
            .filter(|&k| outcomes_path(k).exists())
            .collect();
        if found.is_empty() {
            return Err(Error::MissingArtifact(outcomes_path(cfg.model)));
        }
        found
    } else {
        models.to_vec()
    };
    let mut loaded = Vec::new();
    for &k in &kinds {
        let o: Vec<PredictionOutcome> = read_json(&outcomes_path(k))?;
        loaded.push((k.name(), o));
    }
    let data = load_recordings(&cfg.data_dir())?;
    let table = load_ebq(cfg, &data);
    let args: Vec<(&str, &[PredictionOutcome])> = loaded.iter().map(|(n, o)| (*n, o.as_slice())).collect();
    let report = group_comparison_report(&args, cfg.ebq.min_segments)?;
    write_json(&dir.join("ebq.json"), &table)?;
    write_ebq_csv(&dir.join("ebq.csv"), &table)?;
    write_json(&dir.join("comparisons.json"), &report)?;
    write_comparisons_csv(&dir.join("comparisons.csv"), &report)?;
    write_fractions_csv(&dir.join("fractions.csv"), &report)
}

const REPORT_JSON: [&str; 7] = [
    "train_report.json",
    "model_summary.json",
    "leaderboard.json",
    "metrics.json",
    "importance.json",
    "comparisons.json",
    "ground_truth.json",
];

fn cmd_report(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let root = &cfg.output_dir;
    let mut runs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .filter(|p| {
            let n = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            n != "report" && !n.ends_with(".partial")
        })
        .collect();
    runs.sort();
    let mut index = serde_json::Map::new();
    let mut plots = Vec::new();
    for run in runs {
        let name = run.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let mut files: Vec<String> = std::fs::read_dir(&run)
            .map_err(|e| Error::io(&run, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        files.sort();
        let mut entry = serde_json::Map::new();
        entry.insert("files".into(), serde_json::json!(files));
        for f in &files {
            if REPORT_JSON.contains(&f.as_str()) {
                let v: serde_json::Value = read_json(&run.join(f))?;
                entry.insert(f.trim_end_matches(".json").into(), v);
            } else if f.ends_with(".csv") && f != "manifest.csv" && f != "grouping.csv" {
                let copy = format!("{name}_{f}");
                let dest = dir.join(&copy);
                std::fs::copy(run.join(f), &dest).map_err(|e| Error::io(&dest, e))?;
                plots.push(copy);
            }
        }
        index.insert(name, serde_json::Value::Object(entry));
    }
    write_json(
        &dir.join("index.json"),
        &serde_json::json!({ "runs": index, "plot_csvs": plots }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::MissingArtifact("m".into())), 3);
        assert_eq!(exit_code(&Error::data("f", "bad")), 3);
        assert_eq!(exit_code(&Error::NonFinite("loss".into())), 4);
    }

    #[test]
    fn structured_error_names_path() {
        let v: serde_json::Value = serde_json::from_str(&error_json(&Error::MissingArtifact("a/b.nsm".into()))).unwrap();
        assert_eq!(v["error"], "missing_artifact");
        assert_eq!(v["exit_code"], 3);
        assert_eq!(v["path"], "a/b.nsm");
    }

    #[test]
    fn parse_errors_exit_two() {
        assert_eq!(run(["neurostate", "bogus"]), 2);
        assert_eq!(run(["neurostate", "--help"]), 0);
    }

    #[test]
    fn run_dir_is_write_once_and_cleaned_up() {
        let root = tempfile::tempdir().unwrap();
        let d = RunDir::create(root.path(), "x").unwrap();
        let staged = d.path().to_path_buf();
        drop(d);
        assert!(!staged.exists());
        RunDir::create(root.path(), "x").unwrap().finish().unwrap();
        assert!(matches!(RunDir::create(root.path(), "x"), Err(Error::Config(_))));
    }
}
