use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ChatRequest, Transport, TransportError};

/// Connection settings for an OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_retries: 4,
            backoff_ms: 500,
            timeout_secs: 120,
        }
    }
}

pub struct HttpTransport {
    config: HttpConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(config: HttpConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport { config, api_key, agent }
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut body = json!({
            "model": request.params.model,
            "temperature": request.params.temperature,
            "messages": request.messages,
        });
        if let Some(max) = request.params.max_tokens {
            body["max_tokens"] = json!(max);
        }
        let mut call = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call.send_json(&body).map_err(|e| TransportError::Network(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| TransportError::Network(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Http { status, body: text.chars().take(500).collect() });
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| TransportError::Malformed(e.to_string()))?;
        let content = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| TransportError::Malformed("missing choices[0].message.content".into()))?;
        if content.trim().is_empty() {
            return Err(TransportError::EmptyResponse);
        }
        Ok(content.to_string())
    }
}

fn retryable(e: &TransportError) -> bool {
    match e {
        TransportError::Network(_) => true,
        TransportError::Http { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

impl Transport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut attempt = 0;
        loop {
            match self.attempt(request) {
                Err(e) if retryable(&e) && attempt < self.config.max_retries => {
                    let delay = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_transient_failures_are_retried() {
        assert!(retryable(&TransportError::Http { status: 429, body: String::new() }));
        assert!(retryable(&TransportError::Http { status: 503, body: String::new() }));
        assert!(!retryable(&TransportError::Http { status: 401, body: String::new() }));
        assert!(!retryable(&TransportError::EmptyResponse));
    }
}
