//! Pipeline configuration: a permissive raw form and the validated form.
//!
//! Config files are either JSON or flat `key = value` lines whose keys mirror
//! the [`PipelineConfig`] field names (`llm.base_url = ...` for nested ones).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const DEFAULT_DELTA: usize = 10;
pub const DEFAULT_EXEMPLARS: usize = 10;
pub const DEFAULT_K_NBR: usize = 10;
pub const DEFAULT_T_MACRO: usize = 3;
pub const DEFAULT_MICRO_BUDGET: usize = 100;
pub const DEFAULT_MICRO_TOL: f64 = 1e-4;
pub const DEFAULT_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionStrategy {
    Kmeanspp,
    Mad,
    #[default]
    Mmr,
    Nn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingStrategy {
    #[default]
    Similarity,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Unsupervised,
    SemiSupervised,
}

/// Which of the four refinement mechanisms are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mechanisms {
    pub dcs: bool,
    pub hsr: bool,
    pub seeding: bool,
    pub sml: bool,
}

impl Default for Mechanisms {
    fn default() -> Self {
        Self {
            dcs: true,
            hsr: true,
            seeding: true,
            sml: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub base_url: Option<String>,
    pub path: String,
    pub model: Option<String>,
    /// Use the offline mock model; it echoes unless `mock_script` is set.
    pub mock: bool,
    pub mock_script: Option<PathBuf>,
    /// Transport retries after the first attempt.
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    pub initial_backoff_ms: u64,
    /// Directory with `summary.txt`, `refine.txt`, `map.txt` overriding the built-in wording.
    pub template_dir: Option<PathBuf>,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            base_url: None,
            path: "/v1/chat/completions".into(),
            model: None,
            mock: false,
            mock_script: None,
            max_retries: 3,
            max_in_flight: 8,
            timeout_secs: 120,
            initial_backoff_ms: 500,
            template_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSettings {
    /// Precomputed NILCEMB1 file for the dataset utterances.
    pub embeddings: Option<PathBuf>,
    pub url: Option<String>,
    pub path: String,
    pub model: Option<String>,
    pub mock: bool,
    pub mock_dim: usize,
    pub batch_size: usize,
    pub max_retries: u32,
    pub l2_normalize: bool,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self {
            embeddings: None,
            url: None,
            path: "/v1/embeddings".into(),
            model: None,
            mock: false,
            mock_dim: 32,
            batch_size: 64,
            max_retries: 3,
            l2_normalize: false,
        }
    }
}

/// Configuration as written by a user; unset fields take defaults during validation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    pub k: Option<usize>,
    pub t_macro: Option<usize>,
    pub micro_budget: Option<usize>,
    pub micro_tol: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<usize>,
    pub exemplar_count: Option<usize>,
    pub k_nbr: Option<usize>,
    pub selection_strategy: Option<SelectionStrategy>,
    pub mapping_strategy: Option<MappingStrategy>,
    pub mode: Option<Mode>,
    pub rng_seed: Option<u64>,
    pub mechanisms: Mechanisms,
    pub llm: LlmSettings,
    pub encoder: EncoderSettings,
}

/// Validated configuration. Construct through [`validate_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k: usize,
    pub t_macro: usize,
    pub micro_budget: usize,
    pub micro_tol: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: usize,
    pub exemplar_count: usize,
    pub k_nbr: usize,
    pub selection_strategy: SelectionStrategy,
    pub mapping_strategy: MappingStrategy,
    pub mode: Mode,
    pub rng_seed: u64,
    pub mechanisms: Mechanisms,
    pub llm: LlmSettings,
    pub encoder: EncoderSettings,
}

impl PipelineConfig {
    /// Defaults for everything except `k`.
    pub fn with_k(k: usize) -> Result<Self> {
        validate_config(RawConfig {
            k: Some(k),
            ..RawConfig::default()
        })
    }

    /// Weights actually applied, after mechanism switches and run mode.
    pub fn effective_weights(&self) -> (f64, f64, f64) {
        let (alpha, beta) = if self.mechanisms.dcs {
            (self.alpha, self.beta)
        } else {
            (0.0, 0.0)
        };
        let gamma = if self.mode == Mode::SemiSupervised && self.mechanisms.sml {
            self.gamma
        } else {
            0.0
        };
        (alpha, beta, gamma)
    }
}

impl From<PipelineConfig> for RawConfig {
    fn from(c: PipelineConfig) -> Self {
        RawConfig {
            k: Some(c.k),
            t_macro: Some(c.t_macro),
            micro_budget: Some(c.micro_budget),
            micro_tol: Some(c.micro_tol),
            alpha: Some(c.alpha),
            beta: Some(c.beta),
            gamma: Some(c.gamma),
            delta: Some(c.delta),
            exemplar_count: Some(c.exemplar_count),
            k_nbr: Some(c.k_nbr),
            selection_strategy: Some(c.selection_strategy),
            mapping_strategy: Some(c.mapping_strategy),
            mode: Some(c.mode),
            rng_seed: Some(c.rng_seed),
            mechanisms: c.mechanisms,
            llm: c.llm,
            encoder: c.encoder,
        }
    }
}

fn weight(name: &str, value: Option<f64>) -> Result<f64> {
    let w = value.unwrap_or(DEFAULT_WEIGHT);
    if !w.is_finite() || w < 0.0 {
        return Err(Error::Config(format!(
            "{name} out of range: must be a finite non-negative number, got {w}"
        )));
    }
    Ok(w)
}

/// Fills defaults and enforces the configuration invariants.
///
/// An explicit `k_nbr` must lie in `1..K`; when left unset it defaults to
/// `min(10, K - 1)`.
pub fn validate_config(raw: RawConfig) -> Result<PipelineConfig> {
    let k = raw.k.ok_or_else(|| Error::Config("K is required".into()))?;
    if k < 2 {
        return Err(Error::Config("K must exceed 1".into()));
    }
    let t_macro = raw.t_macro.unwrap_or(DEFAULT_T_MACRO);
    if t_macro < 1 {
        return Err(Error::Config("iteration count must be at least 1".into()));
    }
    let exemplar_count = raw.exemplar_count.unwrap_or(DEFAULT_EXEMPLARS);
    if exemplar_count < 1 {
        return Err(Error::Config("exemplar count must be at least 1".into()));
    }
    let k_nbr = match raw.k_nbr {
        Some(n) if n >= k => return Err(Error::Config("neighbor count must be below K".into())),
        Some(0) => return Err(Error::Config("neighbor count must be at least 1".into())),
        Some(n) => n,
        None => DEFAULT_K_NBR.min(k - 1),
    };
    let micro_tol = raw.micro_tol.unwrap_or(DEFAULT_MICRO_TOL);
    if !micro_tol.is_finite() || micro_tol < 0.0 {
        return Err(Error::Config(format!(
            "micro_tol out of range: must be a finite non-negative number, got {micro_tol}"
        )));
    }
    if raw.llm.max_in_flight == 0 {
        return Err(Error::Config("llm.max_in_flight must be at least 1".into()));
    }
    if raw.encoder.batch_size == 0 {
        return Err(Error::Config("encoder.batch_size must be at least 1".into()));
    }
    if raw.encoder.mock_dim == 0 {
        return Err(Error::Config("encoder.mock_dim must be at least 1".into()));
    }
    Ok(PipelineConfig {
        k,
        t_macro,
        micro_budget: raw.micro_budget.unwrap_or(DEFAULT_MICRO_BUDGET),
        micro_tol,
        alpha: weight("alpha", raw.alpha)?,
        beta: weight("beta", raw.beta)?,
        gamma: weight("gamma", raw.gamma)?,
        delta: raw.delta.unwrap_or(DEFAULT_DELTA),
        exemplar_count,
        k_nbr,
        selection_strategy: raw.selection_strategy.unwrap_or_default(),
        mapping_strategy: raw.mapping_strategy.unwrap_or_default(),
        mode: raw.mode.unwrap_or_default(),
        rng_seed: raw.rng_seed.unwrap_or(0),
        mechanisms: raw.mechanisms,
        llm: raw.llm,
        encoder: raw.encoder,
    })
}

/// Reads a JSON or `key = value` config file into a [`RawConfig`].
pub fn load_config_file(path: &Path) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Json(err) => Error::Config(format!("{}: {err}", path.display())),
        other => other,
    })
}

pub fn parse_config_str(text: &str) -> Result<RawConfig> {
    if text.trim_start().starts_with('{') {
        return Ok(serde_json::from_str(text)?);
    }
    let mut root = Map::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("config line {}: expected key = value", lineno + 1))
        })?;
        let value = value.trim();
        let parsed = serde_json::from_str::<Value>(value).unwrap_or_else(|_| Value::String(value.to_string()));
        let mut parts = key.trim().split('.').peekable();
        let mut node = &mut root;
        while let Some(part) = parts.next() {
            if parts.peek().is_none() {
                node.insert(part.to_string(), parsed.clone());
                break;
            }
            let child = node
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Map::new()));
            node = child.as_object_mut().ok_or_else(|| {
                Error::Config(format!("config line {}: {part} is not a section", lineno + 1))
            })?;
        }
    }
    Ok(serde_json::from_value(Value::Object(root))?)
}
