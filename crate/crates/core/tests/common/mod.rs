//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use nilc::config::{validate_config, PipelineConfig, RawConfig};
use nilc::encoder::{EmbeddingSource, MockEncoder};
use nilc::llm::{Completion, LlmBackend, PromptKind, PromptRequest};
use nilc::EmbeddingMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Isotropic Gaussian blobs, points interleaved by blob. Returns the matrix
/// and the blob index of every row.
pub fn blobs(centers: &[Vec<f64>], per_blob: usize, sigma: f64, seed: u64) -> (EmbeddingMatrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for _ in 0..per_blob {
        for (b, c) in centers.iter().enumerate() {
            rows.push(c.iter().map(|v| v + noise.sample(&mut rng)).collect());
            truth.push(b);
        }
    }
    (EmbeddingMatrix::from_rows(&rows).unwrap(), truth)
}

/// Random centers in `[-spread, spread]^d`.
pub fn random_centers(k: usize, d: usize, spread: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let u = rand_distr::Uniform::new(-spread, spread).unwrap();
    (0..k).map(|_| (0..d).map(|_| u.sample(&mut rng)).collect()).collect()
}

pub fn texts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("utterance {i}")).collect()
}

/// Dataset rows served from the matrix, anything else from the mock encoder.
pub fn hybrid(texts: &[String], x: &EmbeddingMatrix, seed: u64) -> EmbeddingSource {
    EmbeddingSource::hybrid(texts, x, Some(Box::new(MockEncoder::new(x.dim(), seed))), 64).unwrap()
}

pub fn config(k: usize, edit: impl FnOnce(&mut RawConfig)) -> PipelineConfig {
    let mut raw = RawConfig {
        k: Some(k),
        ..RawConfig::default()
    };
    edit(&mut raw);
    validate_config(raw).unwrap()
}

/// Echoes every prompt except refinement, which it answers by rewriting the
/// utterance into the first example of its home cluster.
pub struct ExemplarRewriter;

impl LlmBackend for ExemplarRewriter {
    fn complete(&self, req: &PromptRequest) -> nilc::Result<Completion> {
        let text = match req.kind {
            PromptKind::Refine => {
                let echo: serde_json::Value = serde_json::from_str(&req.echo).unwrap();
                let example = req
                    .body
                    .lines()
                    .find_map(|l| l.strip_prefix("- "))
                    .unwrap_or_default();
                serde_json::json!({"judged_cluster": echo["judged_cluster"], "rewritten": example}).to_string()
            }
            _ => req.echo.clone(),
        };
        Ok(Completion { text, attempts: 1 })
    }
}

pub fn toy_dataset() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy.jsonl")
}
