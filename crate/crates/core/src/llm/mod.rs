//! Chat-model conversation protocol with record/replay transports.
//!
//! Every request is reduced to a [`ChatRequest`] (model parameters plus the
//! full message list) and hashed; a [`TranscriptStore`] maps hashes to
//! responses so whole pipelines can be replayed without network access.

mod extract;
mod http;
mod store;
mod suite;

use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use extract::{extract_sql, Extraction};
pub use http::{HttpConfig, HttpTransport};
pub use store::{RecordingTransport, ReplayTransport, StoreError, TranscriptRecord, TranscriptStore};
pub use suite::{
    acquire_interpretation, build_interpretation_script, build_translation_conversation, run_translation_suite,
    InterpretationCache, Prediction, SuiteError, TranslationOutcome, Variant, TRANSLATION_INSTRUCTION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Interpretation,
    Translation,
    DcProbe,
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Purpose::Interpretation => "interpretation",
            Purpose::Translation => "translation",
            Purpose::DcProbe => "dc_probe",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptMeta {
    pub database: String,
    pub question_id: Option<String>,
    pub purpose: Purpose,
}

/// Ordered messages for one request, plus bookkeeping that is not sent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationScript {
    pub messages: Vec<Message>,
    pub meta: ScriptMeta,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Sampling parameters; part of the request hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub model: String,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams { model: "gpt-3.5-turbo".into(), temperature: 0.0, max_tokens: None }
    }
}

/// Exactly what goes over the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(flatten)]
    pub params: ModelParams,
    pub messages: Vec<Message>,
}

impl ChatRequest {
    /// SHA-256 over the canonical JSON encoding of the request.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("request serialises");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("empty response")]
    EmptyResponse,
    #[error("no recorded response for request {hash}")]
    ReplayMiss { hash: String },
    #[error("transcript store: {0}")]
    Store(String),
}

/// Minimal chat-completion interface.
pub trait Transport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

/// Transport backed by a closure; for offline stubs and tests.
pub struct FnTransport<F>(pub F);

impl<F> Transport for FnTransport<F>
where
    F: Fn(&ChatRequest) -> Result<String, TransportError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        (self.0)(request)
    }
}

/// A request as seen by the client, kept for inspection after a run.
#[derive(Debug, Clone, Serialize)]
pub struct LoggedRequest {
    pub hash: String,
    pub meta: ScriptMeta,
    pub messages: Vec<Message>,
    pub ok: bool,
}

/// Transport plus model parameters, concurrency limit and a request log.
pub struct LlmClient {
    transport: Arc<dyn Transport>,
    pub params: ModelParams,
    pub concurrency: usize,
    log: Mutex<Vec<LoggedRequest>>,
}

impl LlmClient {
    pub fn new(transport: Arc<dyn Transport>, params: ModelParams, concurrency: usize) -> Self {
        LlmClient { transport, params, concurrency: concurrency.max(1), log: Mutex::new(Vec::new()) }
    }

    pub fn send(&self, script: &ConversationScript) -> Result<String, TransportError> {
        let request = ChatRequest { params: self.params.clone(), messages: script.messages.clone() };
        let result = self.transport.complete(&request);
        let entry = LoggedRequest {
            hash: request.hash(),
            meta: script.meta.clone(),
            messages: request.messages,
            ok: result.is_ok(),
        };
        self.log.lock().expect("log lock").push(entry);
        result
    }

    /// Requests sent so far, sorted by purpose, database and question so the
    /// order does not depend on thread scheduling.
    pub fn request_log(&self) -> Vec<LoggedRequest> {
        let mut log = self.log.lock().expect("log lock").clone();
        log.sort_by(|a, b| {
            (a.meta.purpose as u8, &a.meta.database, &a.meta.question_id, &a.hash)
                .cmp(&(b.meta.purpose as u8, &b.meta.database, &b.meta.question_id, &b.hash))
        });
        log
    }

    pub fn take_request_log(&self) -> Vec<LoggedRequest> {
        let log = self.request_log();
        self.log.lock().expect("log lock").clear();
        log
    }

    /// Runs `f` on a thread pool sized to the concurrency limit.
    pub fn pool(&self) -> rayon::ThreadPool {
        rayon::ThreadPoolBuilder::new().num_threads(self.concurrency).build().expect("thread pool")
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use std::collections::HashMap;
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;

    /// Answers by looking up the last user message; counts hits.
    pub struct ScriptedTransport {
        pub answers: HashMap<String, String>,
        pub default: Option<String>,
        pub hits: AtomicUsize,
    }

    impl ScriptedTransport {
        pub fn new(default: Option<&str>) -> Self {
            ScriptedTransport { answers: HashMap::new(), default: default.map(str::to_string), hits: AtomicUsize::new(0) }
        }
    }

    impl Transport for ScriptedTransport {
        fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
            self.hits.fetch_add(1, Ordering::SeqCst);
            let last = &request.messages.last().expect("non-empty").content;
            self.answers
                .iter()
                .find(|(k, _)| last.contains(k.as_str()))
                .map(|(_, v)| v.clone())
                .or_else(|| self.default.clone())
                .ok_or(TransportError::Network("scripted transport has no answer".into()))
        }
    }
}
