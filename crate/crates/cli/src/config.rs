//! Layered JSON configuration: defaults, then a config file, then `--set`
//! pairs, validated against the target schema before use.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::{CliError, CliResult, Overrides};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_object(path: &Path) -> CliResult<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(usage(format!("config {} must be a JSON object", path.display()))),
        Err(e) => Err(usage(format!("config {} is not valid JSON: {e}", path.display()))),
    }
}

/// `key=value`; the value is JSON when it parses, a string otherwise.
fn parse_pair(pair: &str) -> CliResult<(String, Value)> {
    let (key, raw) = pair
        .split_once('=')
        .ok_or_else(|| usage(format!("--set expects key=value, got {pair:?}")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

/// Apply the file and `--set` layers on top of `base`, plus explicit flag
/// values last.
pub fn resolve<T: Serialize + DeserializeOwned>(
    base: &T,
    overrides: &Overrides,
    flags: Vec<(&str, Value)>,
) -> CliResult<T> {
    let Value::Object(mut map) =
        serde_json::to_value(base).map_err(|e| usage(format!("cannot encode defaults: {e}")))?
    else {
        return Err(usage("configuration defaults must be an object"));
    };
    if let Some(path) = &overrides.config {
        map.extend(read_object(path)?);
    }
    for pair in &overrides.set {
        let (k, v) = parse_pair(pair)?;
        map.insert(k, v);
    }
    for (k, v) in flags {
        map.insert(k.to_string(), v);
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| usage(format!("invalid configuration: {e}")))
}
