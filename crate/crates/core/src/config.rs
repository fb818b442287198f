//! Run configuration: one TOML file plus `key=value` overrides, and the
//! fitting entry point shared by the command line and tests.

use crate::control::SchemeKind;
use crate::decode::GenConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::text::corpus::ControlledExample;
use crate::text::vocab::build_vocab;
use crate::train::{prepare_example, train, Prepared, TrainConfig, TrainOutcome, TrainOutput};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            train: "data/train.jsonl".into(),
            dev: "data/dev.jsonl".into(),
            test: "data/test.jsonl".into(),
            out_dir: "runs/default".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scheme: SchemeKind,
    pub paths: Paths,
    /// `vocab_size` is an upper bound; the fitted vocabulary may be smaller.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub gen: GenConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scheme: SchemeKind::None,
            paths: Paths::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            gen: GenConfig::default(),
        }
    }
}

/// Parses a right-hand side as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Sets the dotted `key` in `table`, creating intermediate tables.
fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last =
        parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("empty override key {key:?}")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Config(format!("override {key}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Defaults, then `file`, then each `key=value` override in order.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            set_dotted(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.gen.validate(self.model.max_tgt_len)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

/// Builds the vocabulary and scheme from `train_set`, then trains.
pub fn fit(
    train_set: &[ControlledExample],
    dev_set: &[ControlledExample],
    run: &RunConfig,
    out: Option<&TrainOutput>,
) -> Result<TrainOutcome> {
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::Data("training and dev sets must be non-empty".into()));
    }
    let texts: Vec<&str> = train_set.iter().flat_map(|e| [e.document.text(), e.summary.text()]).collect();
    let vocab = build_vocab(&texts, run.model.vocab_size)?;
    let scheme = run.scheme.resolve(train_set)?;
    log::info!("scheme {scheme}, vocabulary of {} tokens", vocab.len());
    let prep = |set: &[ControlledExample]| -> Result<Vec<Prepared>> {
        set.iter().map(|e| prepare_example(e, &scheme, &vocab)).collect()
    };
    let (tr, dv) = (prep(train_set)?, prep(dev_set)?);
    let model_cfg = ModelConfig { vocab_size: vocab.len(), ..run.model.clone() };
    if let Some(o) = out {
        std::fs::create_dir_all(&o.dir).map_err(|e| Error::io(&o.dir, e))?;
        let path = o.dir.join("config.toml");
        std::fs::write(&path, run.to_toml()).map_err(|e| Error::io(&path, e))?;
    }
    train(&tr, &dv, &scheme, &vocab, &model_cfg, &run.train, out)
}
