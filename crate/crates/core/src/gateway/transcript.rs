use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Usage;
use crate::agents::DecisionPair;

/// One model call, stored verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    /// Position in the store, assigned on append.
    #[serde(default)]
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<usize>,
    /// 0 for the first parse attempt, 1.. for corrective retries.
    #[serde(default)]
    pub attempt: u32,
    pub provider_id: String,
    pub model_id: String,
    pub temperature: f64,
    pub system: String,
    pub user: String,
    pub reply: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<DecisionPair>,
    /// Transport retries the gateway spent on this call.
    #[serde(default)]
    pub transport_retries: u32,
    pub started_ms: u64,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt transcript {path} line {line}: {source}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Append-only JSON-lines store of exchanges.
#[derive(Debug)]
pub struct TranscriptLog {
    path: Option<PathBuf>,
    file: Option<File>,
    memory: Vec<ChatExchange>,
    next_seq: u64,
}

impl TranscriptLog {
    /// Keeps exchanges in memory only.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            file: None,
            memory: Vec::new(),
            next_seq: 0,
        }
    }

    /// Opens (or creates) a file store; existing records are kept and new
    /// ones continue the sequence.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, TranscriptError> {
        let path = path.into();
        let existing = if path.exists() {
            read_transcript(&path)?.len() as u64
        } else {
            0
        };
        let io = |source| TranscriptError::Io {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(Self {
            file: Some(file),
            path: Some(path),
            memory: Vec::new(),
            next_seq: existing,
        })
    }

    /// Starts a fresh file store, discarding any previous content.
    pub fn create(path: impl Into<PathBuf>) -> Result<Self, TranscriptError> {
        let path = path.into();
        if path.exists() {
            std::fs::remove_file(&path).map_err(|source| TranscriptError::Io {
                path: path.clone(),
                source,
            })?;
        }
        Self::open(path)
    }

    pub fn len(&self) -> u64 {
        self.next_seq
    }

    pub fn is_empty(&self) -> bool {
        self.next_seq == 0
    }

    /// Appends one exchange and syncs it to disk; returns its sequence id.
    pub fn record_exchange(&mut self, mut exchange: ChatExchange) -> Result<u64, TranscriptError> {
        let seq = self.next_seq;
        exchange.seq = seq;
        if let (Some(file), Some(path)) = (self.file.as_mut(), self.path.as_ref()) {
            let io = |source| TranscriptError::Io {
                path: path.clone(),
                source,
            };
            let mut line = serde_json::to_string(&exchange).expect("exchange serializes");
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(io)?;
            file.sync_data().map_err(io)?;
        } else {
            self.memory.push(exchange);
        }
        self.next_seq += 1;
        Ok(seq)
    }

    /// Records in append order.
    pub fn read_back(&self) -> Result<Vec<ChatExchange>, TranscriptError> {
        match &self.path {
            Some(path) => read_transcript(path),
            None => Ok(self.memory.clone()),
        }
    }
}

/// Reads a JSON-lines transcript file.
pub fn read_transcript(path: &Path) -> Result<Vec<ChatExchange>, TranscriptError> {
    let file = File::open(path).map_err(|source| TranscriptError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| TranscriptError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let ex = serde_json::from_str(&line).map_err(|source| TranscriptError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(ex);
    }
    Ok(out)
}
