//! Config documents: defaults, then a JSON file, then CLI flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Reads a JSON object from `path`.
pub fn read_document(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("reading config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(CliError::Usage(format!("config {} must be a JSON object", path.display()))),
        Err(e) => Err(CliError::Usage(format!("config {}: {e}", path.display()))),
    }
}

/// Overlays `overrides` on the serialised `defaults`. Keys the defaults do
/// not have are rejected; nested objects are replaced whole and then checked
/// by the target type's own deserialiser.
pub fn merge<T: Serialize + DeserializeOwned>(defaults: &T, overrides: &Map<String, Value>) -> Result<T, CliError> {
    let Value::Object(mut base) = serde_json::to_value(defaults).expect("config serialises") else {
        unreachable!("configs serialise to objects")
    };
    let mut unknown: Vec<&str> = overrides.keys().filter(|k| !base.contains_key(*k)).map(String::as_str).collect();
    if !unknown.is_empty() {
        unknown.sort_unstable();
        let mut known: Vec<&String> = base.keys().collect();
        known.sort_unstable();
        return Err(CliError::Usage(format!(
            "unknown config key(s) {}; known keys: {}",
            unknown.join(", "),
            known.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        )));
    }
    for (k, v) in overrides {
        base.insert(k.clone(), v.clone());
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| CliError::Usage(format!("config: {e}")))
}

/// Picks a string-valued key out of a document, e.g. `model` before defaults exist.
pub fn peek<T: DeserializeOwned>(doc: &Map<String, Value>, key: &str) -> Result<Option<T>, CliError> {
    doc.get(key)
        .map(|v| serde_json::from_value(v.clone()).map_err(|e| CliError::Usage(format!("config key {key}: {e}"))))
        .transpose()
}

pub fn set<V: Serialize>(doc: &mut Map<String, Value>, key: &str, value: Option<V>) {
    if let Some(v) = value {
        doc.insert(key.to_string(), serde_json::to_value(v).expect("flag value serialises"));
    }
}
