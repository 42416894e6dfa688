use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{Completion, LlmBackend, PromptKind, PromptRequest};
use crate::error::{Error, Result};

/// A canned response. A rule matches when its kind (if any) equals the
/// request kind and its `contains` text (if any) occurs in the prompt body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default)]
    pub kind: Option<PromptKind>,
    #[serde(default)]
    pub contains: Option<String>,
    pub response: String,
}

impl MockRule {
    fn matches(&self, req: &PromptRequest) -> bool {
        self.kind.is_none_or(|k| k == req.kind)
            && self.contains.as_deref().is_none_or(|c| req.body.contains(c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MockDefault {
    #[default]
    Echo,
    Fixed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub default: MockDefault,
    #[serde(default)]
    pub fixed_text: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Rules(Vec<MockRule>),
    Full(MockScript),
}

impl MockScript {
    pub fn echo() -> Self {
        Self::default()
    }

    pub fn fixed(text: impl Into<String>) -> Self {
        Self {
            rules: Vec::new(),
            default: MockDefault::Fixed,
            fixed_text: Some(text.into()),
        }
    }

    pub fn with_rule(mut self, kind: Option<PromptKind>, contains: Option<&str>, response: &str) -> Self {
        self.rules.push(MockRule {
            kind,
            contains: contains.map(str::to_string),
            response: response.to_string(),
        });
        self
    }

    /// Accepts either a bare rule array or the full object form.
    pub fn from_json(text: &str) -> Result<Self> {
        let script = match serde_json::from_str::<ScriptFile>(text) {
            Ok(ScriptFile::Rules(rules)) => MockScript {
                rules,
                ..MockScript::default()
            },
            Ok(ScriptFile::Full(s)) => s,
            Err(e) => return Err(Error::Config(format!("mock script: {e}"))),
        };
        if script.default == MockDefault::Fixed && script.fixed_text.is_none() {
            return Err(Error::Config("mock script: default \"fixed\" needs fixed_text".into()));
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn respond(&self, req: &PromptRequest) -> String {
        if let Some(rule) = self.rules.iter().find(|r| r.matches(req)) {
            return rule.response.clone();
        }
        match self.default {
            MockDefault::Echo => req.echo.clone(),
            MockDefault::Fixed => self.fixed_text.clone().unwrap_or_default(),
        }
    }
}

/// Deterministic backend driven by a [`MockScript`]. Counts its calls.
#[derive(Debug, Default)]
pub struct MockLlm {
    script: MockScript,
    calls: AtomicUsize,
}

impl MockLlm {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl LlmBackend for MockLlm {
    fn complete(&self, request: &PromptRequest) -> Result<Completion> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(Completion {
            text: self.script.respond(request),
            attempts: 1,
        })
    }
}
