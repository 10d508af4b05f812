//! Append-only JSONL event log, one file per session.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{SessionError, SessionEvent};

/// One line of the log: `{"type", "timestamp", "payload"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    #[serde(flatten)]
    pub event: SessionEvent,
    pub timestamp: i64,
}

pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    pub fn path_for(dir: &Path, session_id: &str) -> PathBuf {
        dir.join(format!("{session_id}.jsonl"))
    }

    pub fn create(dir: &Path, session_id: &str) -> Result<Self, SessionError> {
        let path = Self::path_for(dir, session_id);
        let err = |e: std::io::Error| SessionError::Log {
            path: path.clone(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(err)?;
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(err)?;
        Ok(Self { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &SessionEvent, timestamp: i64) -> Result<(), SessionError> {
        let line = LogLine {
            event: event.clone(),
            timestamp,
        };
        let mut text = serde_json::to_string(&line).map_err(|e| SessionError::Log {
            path: self.path.clone(),
            message: e.to_string(),
        })?;
        text.push('\n');
        self.file
            .write_all(text.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| SessionError::Log {
                path: self.path.clone(),
                message: e.to_string(),
            })
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogLine>, SessionError> {
    let err = |message: String| SessionError::Log {
        path: path.to_path_buf(),
        message,
    };
    let file = File::open(path).map_err(|e| err(e.to_string()))?;
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
        lines.push(parsed);
    }
    Ok(lines)
}
