use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::{json, Value};

use super::{Completion, LlmBackend, PromptRequest};
use crate::config::LlmSettings;
use crate::error::{Error, Result};
use crate::transport::{build_client, join_url, post_json, RetryPolicy};

/// Environment variable holding the bearer token for the chat endpoint.
pub const API_KEY_ENV: &str = "NILC_LLM_API_KEY";

/// Chat-completions client: POST `{model, messages, temperature}` and read
/// `choices[0].message.content`.
#[derive(Debug, Clone)]
pub struct HttpLlm {
    client: Client,
    url: String,
    model: String,
    api_key: Option<String>,
    policy: RetryPolicy,
}

impl HttpLlm {
    pub fn new(base_url: &str, path: &str, model: &str) -> Result<Self> {
        Self::from_settings(&LlmSettings {
            base_url: Some(base_url.into()),
            path: path.into(),
            model: Some(model.into()),
            ..LlmSettings::default()
        })
    }

    pub fn from_settings(s: &LlmSettings) -> Result<Self> {
        let base = s
            .base_url
            .as_deref()
            .ok_or_else(|| Error::Config("llm.base_url is required for a remote model".into()))?;
        let model = s
            .model
            .clone()
            .ok_or_else(|| Error::Config("llm.model is required for a remote model".into()))?;
        let client = build_client(Duration::from_secs(s.timeout_secs)).map_err(Error::Transport)?;
        Ok(Self {
            client,
            url: join_url(base, &s.path),
            model,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            policy: RetryPolicy {
                max_retries: s.max_retries,
                initial_backoff: Duration::from_millis(s.initial_backoff_ms),
            },
        })
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_backoff(mut self, initial: Duration, max_retries: u32) -> Self {
        self.policy = RetryPolicy {
            max_retries,
            initial_backoff: initial,
        };
        self
    }
}

fn content(body: &Value) -> Option<String> {
    body.pointer("/choices/0/message/content")?
        .as_str()
        .map(str::to_string)
}

impl LlmBackend for HttpLlm {
    fn complete(&self, request: &PromptRequest) -> Result<Completion> {
        let payload = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.body}],
            "temperature": request.temperature,
        });
        let posted = post_json(&self.client, &self.url, self.api_key.as_deref(), &payload, &self.policy)
            .map_err(Error::Transport)?;
        let text = content(&posted.body)
            .ok_or_else(|| Error::Transport("response has no choices[0].message.content".into()))?;
        Ok(Completion {
            text,
            attempts: posted.attempts,
        })
    }
}
