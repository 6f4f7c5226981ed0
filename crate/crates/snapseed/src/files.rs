//! Reading and writing the on-disk formats: assembly sources, snapshot
//! documents, drivers, app registries, system configurations and reports.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use snapseed_core::concrete::{AppRegistry, SysConfig};
use snapseed_core::isa::{assemble, Program};
use snapseed_core::snapshot::{SnapshotDoc, SnapshotError, SnapshotIndex};
use snapseed_core::symbolic::TestDriver;

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {detail}")]
    Invalid { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Snapshot {
        path: PathBuf,
        #[source]
        source: SnapshotError,
    },
}

pub fn read_text(path: &Path) -> Result<String, FileError> {
    fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.into(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FileError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| FileError::Json {
        path: path.into(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<(), FileError> {
    fs::write(path, text).map_err(|source| FileError::Io {
        path: path.into(),
        source,
    })
}

/// Assemble the concatenation of `paths`, in order. Corpus services are
/// split into a shared framework file and a service file. Errors name the
/// file and line the offending text came from.
pub fn load_program(paths: &[PathBuf]) -> Result<Program, FileError> {
    let mut src = String::new();
    // (first line of the file in `src`, file)
    let mut starts = Vec::new();
    for p in paths {
        starts.push((src.lines().count() + 1, p));
        src.push_str(&read_text(p)?);
        if !src.ends_with('\n') {
            src.push('\n');
        }
    }
    assemble(&src).map_err(|e| {
        // Errors without a position (line 0) belong to the whole program.
        match starts.iter().rev().find(|(first, _)| e.line >= *first) {
            Some((first, p)) => FileError::Invalid {
                path: (*p).clone(),
                detail: format!("{}:{}: {}", e.line - first + 1, e.col, e.kind),
            },
            None => FileError::Invalid {
                path: paths.first().cloned().unwrap_or_default(),
                detail: e.to_string(),
            },
        }
    })
}

pub fn load_snapshot(path: &Path) -> Result<SnapshotIndex, FileError> {
    let doc: SnapshotDoc = read_json(path)?;
    SnapshotIndex::load(&doc).map_err(|source| FileError::Snapshot {
        path: path.into(),
        source,
    })
}

pub fn load_driver(path: &Path) -> Result<TestDriver, FileError> {
    TestDriver::from_json(&read_text(path)?).map_err(|e| FileError::Invalid {
        path: path.into(),
        detail: e.to_string(),
    })
}

pub fn load_apps(path: &Path) -> Result<AppRegistry, FileError> {
    read_json(path)
}

pub fn load_config(path: &Path) -> Result<SysConfig, FileError> {
    read_json(path)
}
