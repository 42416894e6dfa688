//! Blocking JSON POST with retry on throttling, server errors and transport failures.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::Value;

#[derive(Debug, Clone)]
pub(crate) struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl RetryPolicy {
    fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff.saturating_mul(1u32 << retry.min(16))
    }
}

fn retryable(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
}

/// Response body plus the number of attempts it took.
pub(crate) struct Posted {
    pub body: Value,
    pub attempts: u32,
}

pub(crate) fn join_url(base: &str, path: &str) -> String {
    if path.is_empty() {
        return base.to_string();
    }
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}

pub(crate) fn build_client(timeout: Duration) -> Result<Client, String> {
    Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| e.to_string())
}

pub(crate) fn post_json(
    client: &Client,
    url: &str,
    api_key: Option<&str>,
    payload: &Value,
    policy: &RetryPolicy,
) -> Result<Posted, String> {
    let mut last_error = String::new();
    for attempt in 0..=policy.max_retries {
        if attempt > 0 {
            let wait = policy.backoff(attempt - 1);
            tracing::warn!(attempt, ?wait, error = %last_error, "retrying request");
            thread::sleep(wait);
        }
        let mut request = client.post(url).json(payload);
        if let Some(key) = api_key {
            request = request.bearer_auth(key);
        }
        match request.send() {
            Ok(resp) => {
                let status = resp.status();
                if status.is_success() {
                    let body = resp.json::<Value>().map_err(|e| format!("invalid JSON body: {e}"))?;
                    return Ok(Posted {
                        body,
                        attempts: attempt + 1,
                    });
                }
                let text = resp.text().unwrap_or_default();
                last_error = format!("HTTP {status}: {}", text.chars().take(200).collect::<String>());
                if !retryable(status) {
                    return Err(last_error);
                }
            }
            Err(e) => last_error = e.to_string(),
        }
    }
    Err(format!(
        "giving up after {} attempts: {last_error}",
        policy.max_retries + 1
    ))
}
