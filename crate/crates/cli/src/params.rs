//! Parameter resolution: config file first, command-line flags on top.

use std::fs;
use std::path::Path;

use effcap::channel::ChannelSpec;
use effcap::config::{from_value, parse_json, ChannelConfig, SourceConfig};
use effcap::sources::Source;
use serde::Deserialize;
use serde_json::Value;

use crate::args::{Format, Method};
use crate::CliError;

/// Everything a parameter file may set. Keys a command does not use are
/// ignored; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileParams {
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub source: Option<Value>,
    pub channel: Option<Value>,
    pub theta: Option<OneOrMany>,
    pub snr_db: Option<OneOrMany>,
    pub method: Option<Method>,
    pub n_samples: Option<usize>,
    pub n_blocks: Option<usize>,
    pub q_thresholds: Option<Vec<f64>>,
    pub d_thresholds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn into_vec(self) -> Vec<f64> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))
}

/// Loads a parameter file. A run manifest is accepted too, provided it was
/// written by the same command.
pub fn load_file(path: &Path, command: &str) -> Result<FileParams, CliError> {
    let value: Value = parse_json(&read(path)?, "config")?;
    let params = match value {
        Value::Object(mut obj) if obj.contains_key("parameters") && obj.contains_key("command") => {
            let from = obj.get("command").and_then(Value::as_str).unwrap_or_default().to_string();
            if from != command {
                return Err(invalid(format!(
                    "config: manifest is for `{from}`, not `{command}`"
                )));
            }
            obj.remove("parameters").unwrap_or_default()
        }
        other => other,
    };
    Ok(from_value(params, "config")?)
}

/// A required value, flag first.
pub fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T, CliError> {
    flag.or(file)
        .ok_or_else(|| invalid(format!("{name}: required (flag --{} or config key \"{name}\")", name.replace('_', "-"))))
}

/// Inline JSON or a path, from a flag string or a config value.
fn json_arg(flag: Option<&str>, file: Option<Value>, name: &str) -> Result<Value, CliError> {
    let text = match (flag, file) {
        (Some(s), _) => s.to_string(),
        (None, Some(Value::String(path))) => read(Path::new(&path))?,
        (None, Some(v)) => return Ok(v),
        (None, None) => return required(None, None, name),
    };
    if text.trim_start().starts_with('{') {
        Ok(parse_json(&text, name)?)
    } else {
        Ok(parse_json(&read(Path::new(text.trim()))?, name)?)
    }
}

pub fn source(flag: Option<&str>, file: Option<Value>) -> Result<(SourceConfig, Source), CliError> {
    let cfg = SourceConfig::from_json(json_arg(flag, file, "source")?, "source")?;
    let src = cfg.build("source")?;
    Ok((cfg, src))
}

pub fn channel(flag: Option<&str>, file: Option<Value>) -> Result<(ChannelConfig, ChannelSpec), CliError> {
    let cfg: ChannelConfig = from_value(json_arg(flag, file, "channel")?, "channel")?;
    let spec = cfg.build("channel")?;
    Ok((cfg, spec))
}

/// A nonempty grid of finite values, sorted ascending. With `positive`,
/// every value must also be above zero.
pub fn grid(values: Vec<f64>, name: &str, positive: bool) -> Result<Vec<f64>, CliError> {
    if values.is_empty() {
        return Err(invalid(format!("{name}: grid is empty")));
    }
    for (i, &x) in values.iter().enumerate() {
        if !x.is_finite() || (positive && x <= 0.0) {
            let need = if positive { "positive and finite" } else { "finite" };
            return Err(invalid(format!("{name}[{i}]: {x} must be {need}")));
        }
    }
    let mut v = values;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn scalar(value: OneOrMany, name: &str) -> Result<f64, CliError> {
    match value.into_vec().as_slice() {
        [x] => Ok(*x),
        other => Err(invalid(format!("{name}: expected one value, got {}", other.len()))),
    }
}
