use std::fmt::Write as _;
use std::path::Path;

use serde_json::{Map, Value};

use super::{PromptKind, PromptRequest};
use crate::error::{Error, Result};

const SUMMARY: &str = include_str!("../../templates/summary.txt");
const REFINE: &str = include_str!("../../templates/refine.txt");
const MAP: &str = include_str!("../../templates/map.txt");

/// Prompt wording. Placeholders are `{{name}}` and are substituted verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub summary: String,
    pub refine: String,
    pub map: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            summary: SUMMARY.into(),
            refine: REFINE.into(),
            map: MAP.into(),
        }
    }
}

/// Everything a prompt shows about one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterContext<'a> {
    pub cluster: usize,
    pub summary: Option<&'a str>,
    pub exemplars: Vec<&'a str>,
}

fn numbered(items: &[&str]) -> String {
    let mut out = String::new();
    for (i, item) in items.iter().enumerate() {
        let _ = writeln!(out, "{}. {}", i + 1, item.trim());
    }
    out.trim_end().to_string()
}

fn describe(ctx: &ClusterContext<'_>) -> String {
    let mut out = format!("Cluster {}", ctx.cluster);
    if let Some(s) = ctx.summary {
        let _ = write!(out, ": {}", s.trim());
    }
    out.push_str("\nExamples:");
    for e in &ctx.exemplars {
        let _ = write!(out, "\n- {}", e.trim());
    }
    out
}

fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in slots {
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    out
}

impl Templates {
    /// Loads `summary.txt`, `refine.txt` and `map.txt` from `dir`; missing files keep the built-in text.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut t = Self::default();
        for (name, slot) in [
            ("summary.txt", &mut t.summary),
            ("refine.txt", &mut t.refine),
            ("map.txt", &mut t.map),
        ] {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(&path)?;
                if slot.trim().is_empty() {
                    return Err(Error::Config(format!("{} is empty", path.display())));
                }
            }
        }
        Ok(t)
    }

    pub fn summary(&self, exemplars: &[&str]) -> PromptRequest {
        let body = fill(&self.summary, &[("exemplars", &numbered(exemplars))]);
        let echo = exemplars.first().map(|s| s.trim().to_string()).unwrap_or_default();
        PromptRequest::new(PromptKind::Summary, body, echo)
    }

    pub fn refine(&self, utterance: &str, home: &ClusterContext<'_>, neighbors: &[ClusterContext<'_>]) -> PromptRequest {
        let neighbor_text = if neighbors.is_empty() {
            "(none)".to_string()
        } else {
            neighbors.iter().map(describe).collect::<Vec<_>>().join("\n\n")
        };
        let body = fill(
            &self.refine,
            &[
                ("home", &describe(home)),
                ("neighbors", &neighbor_text),
                ("utterance", utterance.trim()),
            ],
        );
        let echo = serde_json::json!({"judged_cluster": home.cluster, "rewritten": utterance}).to_string();
        PromptRequest::new(PromptKind::Refine, body, echo)
    }

    pub fn map(&self, intents: &[&str], summaries: &[&str]) -> PromptRequest {
        let intent_text = intents
            .iter()
            .enumerate()
            .map(|(j, l)| format!("Intent {j}: {l}"))
            .collect::<Vec<_>>()
            .join("\n");
        let cluster_text = summaries
            .iter()
            .enumerate()
            .map(|(k, s)| format!("Cluster {k}: {}", s.trim()))
            .collect::<Vec<_>>()
            .join("\n");
        let body = fill(&self.map, &[("intents", &intent_text), ("clusters", &cluster_text)]);
        let diagonal: Map<String, Value> = (0..intents.len()).map(|j| (j.to_string(), Value::from(j))).collect();
        PromptRequest::new(PromptKind::Map, body, Value::Object(diagonal).to_string())
    }
}

pub fn render_summary_prompt(exemplars: &[&str]) -> PromptRequest {
    Templates::default().summary(exemplars)
}

pub fn render_refine_prompt(utterance: &str, home: &ClusterContext<'_>, neighbors: &[ClusterContext<'_>]) -> PromptRequest {
    Templates::default().refine(utterance, home, neighbors)
}

pub fn render_map_prompt(intents: &[&str], summaries: &[&str]) -> PromptRequest {
    Templates::default().map(intents, summaries)
}
