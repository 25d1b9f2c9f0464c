//! Strict JSON configuration files.
//!
//! A file holds one of three documents, told apart by their top-level keys:
//!
//! - a benchmark config (has `dims` or `alphas`), see [`BenchConfig`];
//! - a training run (has `optimizer`), see [`RunConfig`];
//! - a bare optimizer config (has `algorithm`), trained on the default
//!   benchmark task with default run settings.
//!
//! Unknown keys are rejected everywhere. Out-of-range values are reported
//! with the offending key, and every error carries the file path.

use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::bench::BenchConfig;
use crate::error::{Error, Result};
use crate::optim::OptimizerConfig;
use crate::trainer::{RunConfig, Task};

const DEFAULT_TOTAL_STEPS: u64 = 2000;

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigFile {
    Run(RunConfig),
    Bench(BenchConfig),
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ConfigFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigFile {
        path: path.to_path_buf(),
        source: Box::new(Error::Io(e)),
    })?;
    parse_config_str(&text, path)
}

/// Parses `text` as if it had been read from `path`.
pub fn parse_config_str(text: &str, path: &Path) -> Result<ConfigFile> {
    let parse_err = |detail: String| Error::Parse {
        path: path.to_path_buf(),
        detail,
    };
    let value: Value = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(parse_err("top level must be a JSON object".into()));
    };
    let cfg = classify(obj).map_err(|e| match e {
        Error::Internal(detail) => parse_err(detail),
        other => other,
    })?;
    validate(&cfg).map_err(|e| Error::ConfigFile {
        path: path.to_path_buf(),
        source: Box::new(e),
    })?;
    Ok(cfg)
}

fn classify(obj: Map<String, Value>) -> Result<ConfigFile> {
    let de = |e: serde_json::Error| Error::Internal(e.to_string());
    if obj.contains_key("dims") || obj.contains_key("alphas") {
        let b = serde_json::from_value(Value::Object(obj)).map_err(de)?;
        Ok(ConfigFile::Bench(b))
    } else if obj.contains_key("optimizer") {
        let r = serde_json::from_value(Value::Object(obj)).map_err(de)?;
        Ok(ConfigFile::Run(r))
    } else if obj.contains_key("algorithm") {
        let o: OptimizerConfig = serde_json::from_value(Value::Object(obj)).map_err(de)?;
        Ok(ConfigFile::Run(RunConfig::new(
            Task::default(),
            o,
            DEFAULT_TOTAL_STEPS,
        )))
    } else {
        Err(Error::Internal(
            "cannot tell config kind: expected one of `dims`/`alphas` (bench), \
             `optimizer` (run) or `algorithm` (optimizer)"
                .into(),
        ))
    }
}

fn validate(cfg: &ConfigFile) -> Result<()> {
    match cfg {
        ConfigFile::Run(r) => r.validate(),
        ConfigFile::Bench(b) => b.validate(),
    }
}

/// Key named by a config error, if any.
pub fn error_key(e: &Error) -> Option<&str> {
    match e {
        Error::Config { key, .. } => Some(key),
        Error::ConfigFile { source, .. } => error_key(source),
        _ => None,
    }
}

/// Path named by a config error, if any.
pub fn error_path(e: &Error) -> Option<&PathBuf> {
    match e {
        Error::ConfigFile { path, .. } | Error::Parse { path, .. } => Some(path),
        _ => None,
    }
}
