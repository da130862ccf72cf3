//! TOML configuration shared by the command-line tools.
//!
//! ```toml
//! [llm]
//! endpoint = "https://api.openai.com/v1/chat/completions"
//! model = "gpt-3.5-turbo"
//! temperature = 0.0
//! api_key_env = "OPENAI_API_KEY"
//! concurrency = 4
//! max_retries = 4
//! backoff_ms = 500
//! timeout_secs = 120
//!
//! [audit]
//! datasets = ["spider", "termite"]
//! output = "reports"
//! transcripts = "transcripts.jsonl"
//! mode = "replay"          # replay | record | live
//! seed = 0
//! mask_ratio = 0.25
//! exclude_pk = false
//! max_instances = 1000
//! # wordlist = "words.txt"
//!
//! [packaging]
//! passphrase_env = "SQLCONTAM_PASSPHRASE"
//! memory_kib = 19456
//! iterations = 2
//! lanes = 1
//! ```
//!
//! Every key is optional. Relative paths are resolved against the directory
//! of the configuration file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llm::{HttpConfig, ModelParams};
use crate::packaging::KdfParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    /// Answer only from the transcript store; misses are failures.
    #[default]
    Replay,
    /// Call the endpoint and append every exchange to the store.
    Record,
    /// Call the endpoint without recording.
    Live,
}

impl fmt::Display for TransportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransportMode::Replay => "replay",
            TransportMode::Record => "record",
            TransportMode::Live => "live",
        })
    }
}

impl FromStr for TransportMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "replay" => Ok(TransportMode::Replay),
            "record" => Ok(TransportMode::Record),
            "live" => Ok(TransportMode::Live),
            _ => Err(format!("unknown transport mode `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    pub api_key_env: String,
    pub concurrency: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for LlmSection {
    fn default() -> Self {
        let http = HttpConfig::default();
        let params = ModelParams::default();
        LlmSection {
            endpoint: http.endpoint,
            model: params.model,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            api_key_env: http.api_key_env,
            concurrency: 4,
            max_retries: http.max_retries,
            backoff_ms: http.backoff_ms,
            timeout_secs: http.timeout_secs,
        }
    }
}

impl LlmSection {
    pub fn http(&self) -> HttpConfig {
        HttpConfig {
            endpoint: self.endpoint.clone(),
            api_key_env: self.api_key_env.clone(),
            max_retries: self.max_retries,
            backoff_ms: self.backoff_ms,
            timeout_secs: self.timeout_secs,
        }
    }

    pub fn params(&self) -> ModelParams {
        ModelParams { model: self.model.clone(), temperature: self.temperature, max_tokens: self.max_tokens }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    /// Dataset directories, each holding a `manifest.json`.
    pub datasets: Vec<PathBuf>,
    pub output: PathBuf,
    pub transcripts: PathBuf,
    pub mode: TransportMode,
    pub seed: u64,
    pub mask_ratio: f64,
    pub exclude_pk: bool,
    pub max_instances: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wordlist: Option<PathBuf>,
}

impl Default for AuditSection {
    fn default() -> Self {
        AuditSection {
            datasets: Vec::new(),
            output: PathBuf::from("reports"),
            transcripts: PathBuf::from("transcripts.jsonl"),
            mode: TransportMode::Replay,
            seed: 0,
            mask_ratio: 0.25,
            exclude_pk: false,
            max_instances: 1000,
            wordlist: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PackagingSection {
    pub passphrase_env: String,
    pub memory_kib: u32,
    pub iterations: u32,
    pub lanes: u32,
}

impl Default for PackagingSection {
    fn default() -> Self {
        let kdf = KdfParams::default();
        PackagingSection {
            passphrase_env: "SQLCONTAM_PASSPHRASE".into(),
            memory_kib: kdf.memory_kib,
            iterations: kdf.iterations,
            lanes: kdf.lanes,
        }
    }
}

impl PackagingSection {
    pub fn kdf(&self) -> KdfParams {
        KdfParams { memory_kib: self.memory_kib, iterations: self.iterations, lanes: self.lanes }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub llm: LlmSection,
    pub audit: AuditSection,
    pub packaging: PackagingSection,
    /// Directory relative paths are resolved against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Config, ConfigError> {
        let config: Config =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_string(), message: e.to_string() })?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut config = Config::parse(&text, &path.display().to_string())?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if !(self.audit.mask_ratio > 0.0 && self.audit.mask_ratio <= 1.0) {
            return Err(ConfigError::Invalid(format!("audit.mask_ratio must be in (0, 1], got {}", self.audit.mask_ratio)));
        }
        if self.audit.max_instances == 0 {
            return Err(ConfigError::Invalid("audit.max_instances must be positive".into()));
        }
        if self.llm.concurrency == 0 {
            return Err(ConfigError::Invalid("llm.concurrency must be positive".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// The effective configuration, serialised canonically.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of [`Config::canonical`]; stamped into every report.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
