//! Resolution of a RunConfig from an optional JSON file plus dotted
//! `--set key=value` overrides, e.g. `--set optim.lr=0.005`.

use std::path::Path;

use serde_json::Value;

use crate::config::RunConfig;

use super::{CliError, Result};

pub fn load_config(path: Option<&Path>, sets: &[String]) -> Result<RunConfig> {
    let mut value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::Config(format!("cannot read {}: {e}", p.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => serde_json::to_value(RunConfig::default())?,
    };
    if !value.is_object() {
        return Err(CliError::Config("config root must be a JSON object".into()));
    }
    for setting in sets {
        apply_set(&mut value, setting)?;
    }
    let cfg: RunConfig = serde_json::from_value(value)
        .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    Ok(cfg)
}

fn apply_set(root: &mut Value, setting: &str) -> Result<()> {
    let (key, raw) = setting
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects key=value, got '{setting}'")))?;
    set_dotted(root, key, parse_scalar(raw))
}

/// Insert `parsed` at a dotted path like `optim.lr`, creating intermediate
/// objects as needed.
pub fn set_dotted(root: &mut Value, key: &str, parsed: Value) -> Result<()> {
    let mut cursor = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cursor
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("'{key}' does not address an object")))?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), parsed);
            return Ok(());
        }
        cursor = obj
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split never yields an empty iterator")
}

/// Values parse as JSON when they can (numbers, booleans, arrays, null)
/// and fall back to strings otherwise.
pub fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}
