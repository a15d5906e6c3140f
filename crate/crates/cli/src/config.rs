//! Run configuration files: TOML or JSON in, one canonical JSON form out.
//!
//! The canonical form has sorted keys, every default filled in and no
//! whitespace; its SHA-256 identifies the run.

use std::path::Path;

use patchflow_core::scenario::RunConfig;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    /// By extension; anything that is not `.toml` is read as JSON.
    pub fn of(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("toml") => Self::Toml,
            _ => Self::Json,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub canonical: String,
    pub hash: String,
}

impl LoadedConfig {
    pub fn from_config(config: RunConfig) -> Self {
        let canonical = canonical_json(&config);
        let hash = hash_hex(&canonical);
        Self {
            config,
            canonical,
            hash,
        }
    }
}

pub fn parse_as<T: DeserializeOwned>(text: &str, format: Format) -> Result<T, String> {
    match format {
        Format::Toml => toml::from_str(text).map_err(|e| e.to_string()),
        Format::Json => serde_json::from_str(text).map_err(|e| e.to_string()),
    }
}

fn sorted(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sorted(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sorted).collect()),
        other => other,
    }
}

pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("configuration serializes");
    serde_json::to_string(&sorted(v)).expect("json value serializes")
}

pub fn hash_hex(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn parse_config(text: &str, format: Format) -> Result<LoadedConfig, String> {
    let config: RunConfig = parse_as(text, format)?;
    config.validate().map_err(|e| e.to_string())?;
    Ok(LoadedConfig::from_config(config))
}

pub fn load_config(path: &Path) -> CliResult<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text, Format::of(path)).map_err(|message| CliError::Config {
        path: path.to_path_buf(),
        message,
    })
}
