//! Versioned JSON text documents and atomic file output.
//!
//! Every persisted object is written as a JSON object whose first two keys
//! are `format` (a fixed document name) and `version`. Readers reject any
//! other format name and any version newer than [`SCHEMA_VERSION`].

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    format: &'a str,
    version: u32,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: T,
}

pub trait Document: Serialize + DeserializeOwned {
    const FORMAT: &'static str;

    fn to_text(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&EnvelopeRef {
            format: Self::FORMAT,
            version: SCHEMA_VERSION,
            body: self,
        })?;
        s.push('\n');
        Ok(s)
    }

    fn from_text(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        check_header(Self::FORMAT, &header.format, header.version)?;
        let env: Envelope<Self> = serde_json::from_str(text)?;
        debug_assert_eq!(env.format, Self::FORMAT);
        debug_assert_eq!(env.version, header.version);
        Ok(env.body)
    }

    fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text()?.as_bytes())
    }

    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn check_header(expected: &str, format: &str, version: u32) -> Result<()> {
    if format != expected {
        return Err(Error::Schema(format!("expected format `{expected}`, found `{format}`")));
    }
    if version == 0 || version > SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "unsupported {format} version {version} (this build reads up to {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
