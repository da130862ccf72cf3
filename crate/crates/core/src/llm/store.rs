use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ChatRequest, Transport, TransportError};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot access transcript store {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("conflicting responses recorded for request {hash}")]
    Conflict { hash: String },
}

/// One line of the JSON-lines transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub hash: String,
    pub request: ChatRequest,
    pub response: String,
}

/// Append-only request-hash → response log persisted as JSON lines.
pub struct TranscriptStore {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, String>>,
    writer: Mutex<Option<File>>,
}

impl TranscriptStore {
    /// Store that lives only in memory.
    pub fn in_memory() -> Self {
        TranscriptStore { path: None, entries: RwLock::new(HashMap::new()), writer: Mutex::new(None) }
    }

    /// Opens (or creates) a store file. Existing records are loaded.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let io = |source| StoreError::Io { path: path.display().to_string(), source };
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: TranscriptRecord = serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                insert_checked(&mut entries, record.hash, record.response)?;
            }
        }
        Ok(TranscriptStore { path: Some(path.to_path_buf()), entries: RwLock::new(entries), writer: Mutex::new(None) })
    }

    /// Opens an existing store without creating anything on disk.
    pub fn open_existing(path: &Path) -> Result<Self, StoreError> {
        if !path.exists() {
            return Err(StoreError::Io {
                path: path.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
            });
        }
        Self::open(path)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, hash: &str) -> Option<String> {
        self.entries.read().expect("store lock").get(hash).cloned()
    }

    /// Records a response. Re-recording the same response is a no-op; a
    /// different response for a known hash is a conflict.
    pub fn append(&self, request: &ChatRequest, response: &str) -> Result<(), StoreError> {
        let hash = request.hash();
        {
            let mut entries = self.entries.write().expect("store lock");
            match entries.get(&hash) {
                Some(existing) if existing == response => return Ok(()),
                Some(_) => return Err(StoreError::Conflict { hash }),
                None => {
                    entries.insert(hash.clone(), response.to_string());
                }
            }
        }
        let Some(path) = &self.path else {
            return Ok(());
        };
        let io = |source| StoreError::Io { path: path.display().to_string(), source };
        let record = TranscriptRecord { hash, request: request.clone(), response: response.to_string() };
        let mut line = serde_json::to_string(&record).expect("record serialises");
        line.push('\n');
        let mut writer = self.writer.lock().expect("writer lock");
        if writer.is_none() {
            *writer = Some(OpenOptions::new().create(true).append(true).open(path).map_err(io)?);
        }
        let file = writer.as_mut().expect("opened above");
        file.write_all(line.as_bytes()).map_err(io)?;
        file.flush().map_err(io)
    }
}

fn insert_checked(entries: &mut HashMap<String, String>, hash: String, response: String) -> Result<(), StoreError> {
    match entries.get(&hash) {
        Some(existing) if *existing != response => Err(StoreError::Conflict { hash }),
        Some(_) => Ok(()),
        None => {
            entries.insert(hash, response);
            Ok(())
        }
    }
}

/// Serves responses from a store; unknown requests are errors.
pub struct ReplayTransport {
    store: Arc<TranscriptStore>,
}

impl ReplayTransport {
    pub fn new(store: Arc<TranscriptStore>) -> Self {
        ReplayTransport { store }
    }
}

impl Transport for ReplayTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let hash = request.hash();
        self.store.get(&hash).ok_or(TransportError::ReplayMiss { hash })
    }
}

/// Forwards to an inner transport and records every new response. Requests
/// already in the store are answered from it.
pub struct RecordingTransport {
    inner: Arc<dyn Transport>,
    store: Arc<TranscriptStore>,
}

impl RecordingTransport {
    pub fn new(inner: Arc<dyn Transport>, store: Arc<TranscriptStore>) -> Self {
        RecordingTransport { inner, store }
    }
}

impl Transport for RecordingTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        if let Some(hit) = self.store.get(&request.hash()) {
            return Ok(hit);
        }
        let response = self.inner.complete(request)?;
        self.store.append(request, &response).map_err(|e| TransportError::Store(e.to_string()))?;
        Ok(response)
    }
}
