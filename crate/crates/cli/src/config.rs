//! Layered configuration: built-in defaults, then an optional JSON file,
//! then `key.path=value` overrides. Explicit flags are applied last by the
//! caller.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::{CliError, CliResult};

/// Recursively merges `patch` into `base`; objects merge, anything else
/// replaces.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

/// Applies `a.b.c=value`. The value is parsed as JSON when possible and
/// taken as a string otherwise.
pub fn apply_override(target: &mut Value, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Input(format!("override `{assignment}` is not key=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Input(format!(
            "override `{assignment}` has an empty key segment"
        )));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut patch = value;
    for seg in key.rsplit('.') {
        patch = Value::Object(serde_json::Map::from_iter([(seg.to_owned(), patch)]));
    }
    merge(target, patch);
    Ok(())
}

pub fn layered<T: Serialize + DeserializeOwned + Default>(
    file: Option<&Path>,
    overrides: &[String],
) -> CliResult<T> {
    let mut value =
        serde_json::to_value(T::default()).map_err(|e| CliError::Input(e.to_string()))?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let patch: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        merge(&mut value, patch);
    }
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    serde_json::from_value(value)
        .map_err(|e| CliError::Input(format!("invalid configuration: {e}")))
}
