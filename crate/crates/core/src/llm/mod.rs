//! Prompt rendering, LLM transport, response parsing and the offline mock.
//!
//! Callers build a [`PromptRequest`] with one of the renderers, hand it to an
//! [`LlmBackend`], and decode the text with the matching parser. The
//! [`complete_parsed`] helper re-asks on unparseable output and produces the
//! ledger record for the call.

mod http;
mod mock;
mod parse;
mod templates;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use http::HttpLlm;
pub use mock::{MockDefault, MockLlm, MockRule, MockScript};
pub use parse::{extract_json_object, parse_map_response, parse_refine_response, parse_summary_response};
pub use templates::{
    render_map_prompt, render_refine_prompt, render_summary_prompt, ClusterContext, Templates,
};

/// Completions requested per logical call before giving up on parsing.
pub const DEFAULT_PARSE_RETRIES: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Summary,
    Refine,
    Map,
}

impl PromptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Summary => "summary",
            PromptKind::Refine => "refine",
            PromptKind::Map => "map",
        }
    }
}

/// A rendered prompt.
///
/// `echo` is the response a well-behaved model would give for an identity
/// answer (first exemplar, unchanged utterance, diagonal mapping). Only the
/// mock backend reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub kind: PromptKind,
    pub body: String,
    pub echo: String,
    /// Extra completions allowed when the response does not parse.
    pub max_retries: u32,
    pub temperature: f64,
}

impl PromptRequest {
    pub fn new(kind: PromptKind, body: String, echo: String) -> Self {
        Self {
            kind,
            body,
            echo,
            max_retries: DEFAULT_PARSE_RETRIES,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    /// Transport attempts, including retries.
    pub attempts: u32,
}

/// Anything that turns a prompt into text.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, request: &PromptRequest) -> Result<Completion>;
}

pub fn complete(request: &PromptRequest, backend: &dyn LlmBackend) -> Result<Completion> {
    backend.complete(request)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallOutcome {
    Ok,
    ParseFailed,
    TransportFailed,
}

/// Ledger entry for one logical LLM call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub kind: PromptKind,
    /// Completions requested, counting parse retries.
    pub completions: u32,
    /// Transport attempts summed over all completions.
    pub transport_attempts: u32,
    pub prompt_bytes: usize,
    pub response_bytes: usize,
    pub outcome: CallOutcome,
    #[serde(skip)]
    pub latency: Duration,
}

/// Completes `request`, re-asking up to `request.max_retries` times while
/// `parse` rejects the response. Transport errors end the call immediately.
pub fn complete_parsed<T>(
    backend: &dyn LlmBackend,
    request: &PromptRequest,
    parse: impl Fn(&str) -> Result<T>,
) -> (Result<T>, CallRecord) {
    let started = Instant::now();
    let mut record = CallRecord {
        kind: request.kind,
        completions: 0,
        transport_attempts: 0,
        prompt_bytes: request.body.len(),
        response_bytes: 0,
        outcome: CallOutcome::Ok,
        latency: Duration::ZERO,
    };
    let mut last_err = Error::ResponseParse("no completion requested".into());
    for _ in 0..=request.max_retries {
        record.completions += 1;
        let completion = match backend.complete(request) {
            Ok(c) => c,
            Err(e) => {
                record.outcome = CallOutcome::TransportFailed;
                record.latency = started.elapsed();
                return (Err(e), record);
            }
        };
        record.transport_attempts += completion.attempts;
        record.response_bytes += completion.text.len();
        match parse(&completion.text) {
            Ok(v) => {
                record.latency = started.elapsed();
                return (Ok(v), record);
            }
            Err(e) => {
                tracing::warn!(kind = request.kind.as_str(), error = %e, "unusable llm response");
                last_err = e;
            }
        }
    }
    record.outcome = CallOutcome::ParseFailed;
    record.latency = started.elapsed();
    (Err(last_err), record)
}
