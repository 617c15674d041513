use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// A top-level JSON artifact.
pub trait Document: Serialize + DeserializeOwned {
    const KIND: &'static str;

    fn format_version(&self) -> u32;

    fn validate(&self) -> Result<()> {
        Ok(())
    }
}

/// Writes to a sibling temp file and renames it into place, so a failed
/// write never leaves a partial artifact behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".partial-")
        .tempfile_in(dir)
        .map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Document>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Validation(format!("serialization failed: {e}")))?;
    text.push('\n');
    write_atomic(path.as_ref(), text.as_bytes())
}

pub fn read_json<T: Document>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let kind = sniff_text(&text).map_err(|msg| Error::Format {
        path: path.into(),
        msg,
    })?;
    if kind != T::KIND {
        return Err(Error::Format {
            path: path.into(),
            msg: format!("expected a {} document, found {kind:?}", T::KIND),
        });
    }
    let value: T = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.into(),
        msg: e.to_string(),
    })?;
    if value.format_version() != FORMAT_VERSION {
        return Err(Error::Format {
            path: path.into(),
            msg: format!("unsupported format_version {}", value.format_version()),
        });
    }
    value.validate()?;
    Ok(value)
}

fn sniff_text(text: &str) -> std::result::Result<String, String> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    v.get("kind")
        .and_then(|k| k.as_str())
        .map(str::to_owned)
        .ok_or_else(|| "missing \"kind\" field".to_string())
}

/// The `"kind"` tag of a JSON artifact.
pub fn sniff_kind(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    sniff_text(&text).map_err(|msg| Error::Format {
        path: path.into(),
        msg,
    })
}
