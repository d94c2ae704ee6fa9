//! HTTP completion client.
//!
//! `POST <endpoint>` with `{"prompt", "max_tokens", "stop"}`; the server
//! answers `{"text": ...}`. Failed requests are retried with exponential
//! backoff before the failure reaches the engine.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::backend::{BackendError, PredictorBackend, SlotQuery};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub token: Option<String>,
    pub timeout: Duration,
    /// Additional attempts after the first failed request.
    pub retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            token: None,
            timeout: Duration::from_secs(60),
            retries: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_tokens: usize,
    stop: &'a [&'a str],
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        RemoteBackend { config, agent }
    }

    fn request_once(&self, body: &CompletionRequest<'_>) -> Result<String, BackendError> {
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .set("Content-Type", "application/json");
        if let Some(token) = &self.config.token {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        let payload =
            serde_json::to_string(body).map_err(|e| BackendError::Other(e.to_string()))?;
        let response = req.send_string(&payload).map_err(|e| match e {
            ureq::Error::Status(code, _) => BackendError::Status(code),
            ureq::Error::Transport(t) => BackendError::Transport(t.to_string()),
        })?;
        let text = response
            .into_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        serde_json::from_str::<CompletionResponse>(&text)
            .map(|r| r.text)
            .map_err(|e| BackendError::Malformed(e.to_string()))
    }
}

impl PredictorBackend for RemoteBackend {
    fn complete(&mut self, query: &SlotQuery<'_>) -> Result<String, BackendError> {
        let body = CompletionRequest {
            prompt: query.context,
            max_tokens: query.max_new_tokens,
            stop: query.stop,
        };
        let mut delay = self.config.backoff;
        let mut attempt = 0;
        loop {
            match self.request_once(&body) {
                Ok(text) => return Ok(text),
                Err(e) if attempt < self.config.retries => {
                    log::warn!(
                        "request to {} failed ({e}); retry {}/{} in {:?}",
                        self.config.endpoint,
                        attempt + 1,
                        self.config.retries,
                        delay
                    );
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}
