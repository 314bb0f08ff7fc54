//! Report files: fixed-precision JSON and tab-separated tables, written
//! through a temporary file in the destination directory and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub const SPEC_VERSION: &str = foe::SPEC_VERSION;

/// Rounds every float to 9 significant digits so reports do not depend on
/// the last bits of an accumulation order.
pub fn canonical(value: Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("checked f64");
            let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
            serde_json::Number::from_f64(rounded)
                .map(Value::Number)
                .unwrap_or(Value::Null)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonical).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, canonical(v))).collect()),
        other => other,
    }
}

/// A report document: `spec_version` plus the given sections, keys sorted.
pub fn document(sections: Vec<(&str, Value)>) -> Value {
    let mut map = Map::new();
    map.insert("spec_version".into(), Value::String(SPEC_VERSION.into()));
    for (key, value) in sections {
        map.insert(key.into(), canonical(value));
    }
    Value::Object(map)
}

pub fn to_value<T: Serialize>(value: &T) -> CliResult<Value> {
    Ok(serde_json::to_value(value)?)
}

pub fn render_json(value: &Value) -> CliResult<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// Writes `contents` to `path` atomically: nothing appears at `path` unless
/// the whole file was written.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let io = |e: std::io::Error| {
        CliError::Core(foe::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.flush().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    write_atomic(path, render_json(value)?.as_bytes())
}

/// Writes to `path` if given, otherwise to standard output.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| {
        CliError::Core(foe::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

/// Fixed-precision cell for tables.
pub fn cell(x: f64) -> String {
    format!("{x:.6}")
}
