//! Output directory handling with write-to-temp-then-rename.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("output");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

#[derive(Debug, Clone)]
pub struct OutputDir(pub PathBuf);

impl OutputDir {
    pub fn new(path: impl Into<PathBuf>) -> CliResult<Self> {
        let p = path.into();
        std::fs::create_dir_all(&p).map_err(|e| CliError::io(&p, e))?;
        Ok(Self(p))
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn sub(&self, name: &str) -> CliResult<Self> {
        Self::new(self.0.join(name))
    }
}
