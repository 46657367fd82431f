//! Run configuration: a TOML file merged with environment and flag overrides.
//!
//! Precedence, lowest first: the config file, `NEUROSTATE_OUTPUT_ROOT` (output
//! root only), `--set key=value` overrides, then the dedicated flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SplitSpec;
use crate::error::{Error, Result};
use crate::importance::NoiseSpec;
use crate::models::ModelKind;
use crate::seed;
use crate::synth::{SeriesFormat, SynthSpec};
use crate::training::TrainConfig;

pub const OUTPUT_ROOT_ENV: &str = "NEUROSTATE_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EbqOptions {
    /// REST segments inherit their session's EBQ.
    pub include_rest: bool,
    /// Subjects with fewer test segments are left out of the fraction analyses.
    pub min_segments: usize,
}

impl Default for EbqOptions {
    fn default() -> Self {
        EbqOptions {
            include_rest: true,
            min_segments: 10,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_model() -> ModelKind {
    ModelKind::Cnn
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every other seed in the run.
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Dataset directory holding `manifest.csv`; defaults to `<output_dir>/synth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    /// Network grouping CSV; defaults to `<data_dir>/grouping.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grouping: Option<PathBuf>,
    /// Model checkpoint; defaults to `<output_dir>/train-<model>/model.nsm`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    /// Train every grid point and keep the best by validation accuracy.
    #[serde(default)]
    pub grid_search: bool,
    #[serde(default)]
    pub series_format: SeriesFormat,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub ebq: EbqOptions,
    #[serde(default)]
    pub synth: SynthSpec,
}

/// Values layered over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_root_env: Option<String>,
    /// `dotted.key=value` pairs; values parse as TOML, falling back to strings.
    pub set: Vec<String>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub grouping: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub grid_search: Option<bool>,
    pub series_format: Option<SeriesFormat>,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| config_err(format!("empty key in `{key}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn path_value(p: &Path) -> toml::Value {
    toml::Value::String(p.to_string_lossy().into_owned())
}

impl RunConfig {
    /// Parses a TOML document into a config without any overrides.
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        Self::merge(Some(text), &Overrides::default())
    }

    /// Loads `path` (if any), applies `overrides` and resolves derived seeds.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::Config(format!("config file {} not found", p.display())),
                _ => Error::io(p, e),
            })?),
            None => None,
        };
        Self::merge(text.as_deref(), overrides)
    }

    fn merge(text: Option<&str>, o: &Overrides) -> Result<RunConfig> {
        let mut table: toml::Table = match text {
            Some(t) => toml::from_str(t).map_err(config_err)?,
            None => toml::Table::new(),
        };
        if let Some(root) = o.output_root_env.as_deref().filter(|s| !s.is_empty()) {
            table.insert("output_dir".into(), toml::Value::String(root.into()));
        }
        for kv in &o.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| config_err(format!("override `{kv}` is not key=value")))?;
            set_path(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        if let Some(s) = o.seed {
            let s = i64::try_from(s).map_err(|_| config_err("seed must fit in 63 bits"))?;
            table.insert("seed".into(), toml::Value::Integer(s));
        }
        for (key, val) in [
            ("output_dir", &o.output_dir),
            ("data_dir", &o.data_dir),
            ("grouping", &o.grouping),
            ("checkpoint", &o.checkpoint),
        ] {
            if let Some(p) = val {
                table.insert(key.into(), path_value(p));
            }
        }
        if let Some(m) = o.model {
            table.insert("model".into(), toml::Value::String(m.name().into()));
        }
        if let Some(g) = o.grid_search {
            table.insert("grid_search".into(), toml::Value::Boolean(g));
        }
        if let Some(f) = o.series_format {
            let name = match f {
                SeriesFormat::Binary => "binary",
                SeriesFormat::Csv => "csv",
            };
            table.insert("series_format".into(), toml::Value::String(name.into()));
        }
        let mut cfg: RunConfig = toml::Value::Table(table).try_into().map_err(config_err)?;
        cfg.resolve_seeds();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Derives every section seed from the global seed, replacing file values.
    fn resolve_seeds(&mut self) {
        self.synth.seed = self.sub_seed("synth");
        self.split.seed = self.sub_seed("split");
        self.train.seed = self.sub_seed("train");
        self.noise.seed = self.sub_seed("importance");
    }

    /// Derived seeds keep to 63 bits so they stay representable in TOML.
    fn sub_seed(&self, tag: &str) -> u64 {
        seed::derive(self.seed, &[seed::hash_str(tag)]) & i64::MAX as u64
    }

    /// Seed for initializing a model of `kind`.
    pub fn model_seed(&self, kind: ModelKind) -> u64 {
        seed::derive(self.seed, &[seed::hash_str("model"), seed::hash_str(kind.name())]) & i64::MAX as u64
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.split.validate().map_err(config_err)?;
        self.noise.validate()?;
        self.synth.validate()?;
        for (name, p) in [
            ("data_dir", &self.data_dir),
            ("grouping", &self.grouping),
            ("checkpoint", &self.checkpoint),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::Config(format!("{name} {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.output_dir.join("synth"))
    }

    pub fn grouping_path(&self) -> PathBuf {
        self.grouping.clone().unwrap_or_else(|| self.data_dir().join("grouping.csv"))
    }

    pub fn checkpoint_path(&self, kind: ModelKind) -> PathBuf {
        match &self.checkpoint {
            Some(p) if kind == self.model => p.clone(),
            _ => self.output_dir.join(format!("train-{}", kind.name())).join("model.nsm"),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }
}
