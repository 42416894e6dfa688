//! Text embeddings from a precomputed file, an embedding service or a
//! deterministic hash-based mock, behind one caching front end.
//!
//! A precomputed file only covers the dataset utterances. Summaries and
//! rewrites are new text, so a file-backed source also needs a backend for
//! cache misses (the service or the mock); see [`EmbeddingSource::hybrid`].

mod file;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::EncoderSettings;
use crate::error::{Error, Result};
use crate::transport::{build_client, post_json, RetryPolicy};
use crate::types::EmbeddingMatrix;

pub use file::{decode_embeddings, encode_embeddings, load_embedding_file, write_embedding_file, MAGIC};

/// Environment variable holding the bearer token for the embedding service.
pub const API_KEY_ENV: &str = "NILC_ENCODER_API_KEY";

/// Turns a batch of texts into vectors, in order.
pub trait EmbeddingBackend: Send + Sync {
    /// Output dimension, when known before the first call.
    fn dim(&self) -> Option<usize>;
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Offline hashed bag-of-words encoder. Each lowercase alphanumeric token
/// gets a fixed random direction (ChaCha stream seeded by SHA-256 of the seed
/// and the token); a text is the unit-length sum of its token directions, so
/// texts sharing words land close together.
#[derive(Debug, Clone)]
pub struct MockEncoder {
    dim: usize,
    seed: u64,
}

impl MockEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "mock encoder dimension must be positive");
        Self { dim, seed }
    }

    fn direction(&self, token: &str) -> Vec<f64> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    pub fn embed(&self, text: &str) -> Vec<f64> {
        let lower = text.to_lowercase();
        let mut tokens: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            tokens.push(text);
        }
        let mut v = vec![0.0; self.dim];
        for t in tokens {
            for (a, b) in v.iter_mut().zip(self.direction(t)) {
                *a += b;
            }
        }
        let mut salt = 0u32;
        loop {
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if n > 0.0 {
                return v.into_iter().map(|a| a / n).collect();
            }
            // tokens cancelled exactly; fall back to a direction for the whole text
            salt += 1;
            v = self.direction(&format!("{salt}\u{0}{text}"));
        }
    }
}

impl EmbeddingBackend for MockEncoder {
    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.embed(t)).collect())
    }
}

/// Embedding service speaking `POST {model, input: [..]}` and answering
/// `{data: [{embedding: [..]}, ..]}`.
#[derive(Debug, Clone)]
pub struct ServiceEncoder {
    client: Client,
    url: String,
    model: Option<String>,
    api_key: Option<String>,
    policy: RetryPolicy,
}

impl ServiceEncoder {
    pub fn new(base_url: &str, path: &str, model: Option<String>, max_retries: u32) -> Result<Self> {
        let client = build_client(Duration::from_secs(120)).map_err(Error::Encoder)?;
        Ok(Self {
            client,
            url: crate::transport::join_url(base_url, path),
            model,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            policy: RetryPolicy {
                max_retries,
                initial_backoff: Duration::from_millis(500),
            },
        })
    }

    pub fn from_settings(s: &EncoderSettings) -> Result<Self> {
        let url = s
            .url
            .as_deref()
            .ok_or_else(|| Error::Config("encoder.url is required for the embedding service".into()))?;
        Self::new(url, &s.path, s.model.clone(), s.max_retries)
    }

    pub fn with_backoff(mut self, initial: Duration) -> Self {
        self.policy.initial_backoff = initial;
        self
    }
}

fn parse_embeddings(body: &Value, expected: usize) -> Result<Vec<Vec<f64>>> {
    let data = body
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Encoder("response has no data array".into()))?;
    if data.len() != expected {
        return Err(Error::Encoder(format!(
            "service returned {} embeddings for {expected} texts",
            data.len()
        )));
    }
    data.iter()
        .map(|item| {
            item.get("embedding")
                .and_then(Value::as_array)
                .and_then(|xs| xs.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>())
                .ok_or_else(|| Error::Encoder("embedding must be an array of numbers".into()))
        })
        .collect()
}

impl EmbeddingBackend for ServiceEncoder {
    fn dim(&self) -> Option<usize> {
        None
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut payload = json!({ "input": texts });
        if let Some(m) = &self.model {
            payload["model"] = Value::from(m.as_str());
        }
        let posted = post_json(&self.client, &self.url, self.api_key.as_deref(), &payload, &self.policy)
            .map_err(Error::Encoder)?;
        parse_embeddings(&posted.body, texts.len())
    }
}

/// Backend for file-only sources: every miss is an error.
#[derive(Debug, Clone, Copy)]
struct NoBackend;

impl EmbeddingBackend for NoBackend {
    fn dim(&self) -> Option<usize> {
        None
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Err(Error::Encoder(format!(
            "no embedding for {:?}: a precomputed file only covers dataset text; add the mock encoder or an embedding service",
            texts.first().map(String::as_str).unwrap_or_default()
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    File,
    Service,
    Mock,
}

/// Caching, batching front end over an [`EmbeddingBackend`].
pub struct EmbeddingSource {
    kind: SourceKind,
    backend: Box<dyn EmbeddingBackend>,
    cache: Mutex<HashMap<String, Vec<f64>>>,
    dim: Mutex<Option<usize>>,
    batch_size: usize,
    normalize: bool,
    backend_calls: AtomicUsize,
}

impl std::fmt::Debug for EmbeddingSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingSource")
            .field("kind", &self.kind)
            .field("dim", &self.dim())
            .field("batch_size", &self.batch_size)
            .finish_non_exhaustive()
    }
}

impl EmbeddingSource {
    pub fn new(kind: SourceKind, backend: Box<dyn EmbeddingBackend>, batch_size: usize) -> Self {
        let dim = backend.dim();
        Self {
            kind,
            backend,
            cache: Mutex::new(HashMap::new()),
            dim: Mutex::new(dim),
            batch_size: batch_size.max(1),
            normalize: false,
            backend_calls: AtomicUsize::new(0),
        }
    }

    /// Scale backend output to unit length before caching. Preloaded rows are
    /// stored as given.
    pub fn with_l2_normalize(mut self, on: bool) -> Self {
        self.normalize = on;
        self
    }

    pub fn mock(dim: usize, seed: u64) -> Self {
        Self::new(SourceKind::Mock, Box::new(MockEncoder::new(dim, seed)), 64)
    }

    /// Dataset embeddings from a file; misses go to `fallback` or fail.
    pub fn hybrid(
        texts: &[String],
        matrix: &EmbeddingMatrix,
        fallback: Option<Box<dyn EmbeddingBackend>>,
        batch_size: usize,
    ) -> Result<Self> {
        let backend = fallback.unwrap_or_else(|| Box::new(NoBackend));
        if let Some(d) = backend.dim() {
            if d != matrix.dim() {
                return Err(Error::DimensionMismatch {
                    expected: matrix.dim(),
                    actual: d,
                });
            }
        }
        let source = Self::new(SourceKind::File, backend, batch_size);
        *source.dim.lock().expect("dim lock") = Some(matrix.dim());
        source.preload(texts, matrix)?;
        Ok(source)
    }

    /// Seeds the cache with known text-to-vector pairs. The first occurrence
    /// of a repeated text wins.
    pub fn preload(&self, texts: &[String], matrix: &EmbeddingMatrix) -> Result<()> {
        if texts.len() != matrix.n() {
            return Err(Error::Validation(format!(
                "{} texts but {} embedding rows",
                texts.len(),
                matrix.n()
            )));
        }
        self.check_dim(matrix.dim())?;
        let mut cache = self.cache.lock().expect("cache lock");
        for (t, row) in texts.iter().zip(matrix.rows()) {
            cache.entry(t.clone()).or_insert_with(|| row.to_vec());
        }
        Ok(())
    }

    pub fn kind(&self) -> SourceKind {
        self.kind
    }

    pub fn dim(&self) -> Option<usize> {
        *self.dim.lock().expect("dim lock")
    }

    /// Requests sent to the backend so far.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        let mut dim = self.dim.lock().expect("dim lock");
        match *dim {
            Some(expected) if expected != d => Err(Error::DimensionMismatch { expected, actual: d }),
            Some(_) => Ok(()),
            None => {
                *dim = Some(d);
                Ok(())
            }
        }
    }

    /// Vectors for `texts` in order. Misses are deduplicated and sent to the
    /// backend in batches of at most `batch_size`.
    pub fn encode(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut misses: Vec<String> = Vec::new();
        {
            let cache = self.cache.lock().expect("cache lock");
            for t in texts {
                if !cache.contains_key(t) && !misses.contains(t) {
                    misses.push(t.clone());
                }
            }
        }
        for batch in misses.chunks(self.batch_size) {
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            let vectors = self.backend.embed_batch(batch)?;
            if vectors.len() != batch.len() {
                return Err(Error::Encoder(format!(
                    "backend returned {} vectors for {} texts",
                    vectors.len(),
                    batch.len()
                )));
            }
            for v in &vectors {
                if v.is_empty() {
                    return Err(Error::Encoder("backend returned an empty vector".into()));
                }
                self.check_dim(v.len())?;
                if v.iter().any(|a| !a.is_finite()) {
                    return Err(Error::NonFinite("in encoder output".into()));
                }
            }
            let mut cache = self.cache.lock().expect("cache lock");
            for (t, mut v) in batch.iter().zip(vectors) {
                if self.normalize {
                    let n = crate::numerics::norm(&v);
                    if n > 0.0 {
                        v.iter_mut().for_each(|a| *a /= n);
                    }
                }
                cache.insert(t.clone(), v);
            }
        }
        let cache = self.cache.lock().expect("cache lock");
        Ok(texts.iter().map(|t| cache[t].clone()).collect())
    }

    /// Encodes `texts` into a matrix.
    pub fn encode_matrix(&self, texts: &[String]) -> Result<EmbeddingMatrix> {
        let rows = self.encode(texts)?;
        EmbeddingMatrix::from_rows(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Backend that records batch sizes and returns constant vectors.
    struct Counting {
        batches: Mutex<Vec<usize>>,
        dim: usize,
    }

    impl EmbeddingBackend for Counting {
        fn dim(&self) -> Option<usize> {
            None
        }

        fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
            self.batches.lock().unwrap().push(texts.len());
            Ok(texts.iter().map(|t| vec![t.len() as f64; self.dim]).collect())
        }
    }

    fn counting(dim: usize) -> Box<Counting> {
        Box::new(Counting {
            batches: Mutex::new(Vec::new()),
            dim,
        })
    }

    #[test]
    fn repeated_text_hits_cache() {
        let src = EmbeddingSource::new(SourceKind::Service, counting(2), 64);
        let a = src.encode(&["x".into(), "x".into()]).unwrap();
        let b = src.encode(&["x".into()]).unwrap();
        assert_eq!(src.backend_calls(), 1);
        assert_eq!(a[0], b[0]);
        assert_eq!(a[0].iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b[0].iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn batching_arithmetic() {
        let src = EmbeddingSource::new(SourceKind::Service, counting(3), 64);
        let texts: Vec<String> = (0..130).map(|i| format!("t{i}")).collect();
        let out = src.encode(&texts).unwrap();
        assert_eq!(out.len(), 130);
        assert_eq!(src.backend_calls(), 3);
    }

    #[test]
    fn normalization_applies_to_backend_output() {
        let src = EmbeddingSource::new(SourceKind::Service, counting(4), 8).with_l2_normalize(true);
        let v = src.encode(&["ab".into()]).unwrap();
        assert_eq!(v[0], vec![0.5; 4]);
    }

    #[test]
    fn mock_is_deterministic_and_unit_length() {
        let m = MockEncoder::new(16, 0);
        assert_eq!(m.embed("abc"), m.embed("abc"));
        assert_ne!(m.embed("abc"), m.embed("abd"));
        assert_ne!(m.embed("abc"), MockEncoder::new(16, 1).embed("abc"));
        let n: f64 = m.embed("abc").iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mock_shares_structure_between_overlapping_texts() {
        let m = MockEncoder::new(64, 7);
        let cos = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let a = m.embed("check my card balance");
        let b = m.embed("Check my balance!");
        let c = m.embed("wire funds abroad");
        assert!(cos(&a, &b) > cos(&a, &c) + 0.3);
        assert_eq!(m.embed("balance"), m.embed("BALANCE"));
        assert_eq!(m.embed("?!").len(), 64);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let src = EmbeddingSource::new(SourceKind::Service, counting(3), 8);
        let x = EmbeddingMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        src.preload(&["a".into()], &x).unwrap();
        assert_eq!(src.dim(), Some(2));
        assert!(matches!(
            src.encode(&["b".into()]),
            Err(Error::DimensionMismatch { expected: 2, actual: 3 })
        ));
        let wide = EmbeddingMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(src.preload(&["c".into()], &wide).is_err());
    }

    #[test]
    fn file_only_source_serves_known_text_and_rejects_new_text() {
        let x = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let texts = vec!["a".to_string(), "b".to_string()];
        let src = EmbeddingSource::hybrid(&texts, &x, None, 64).unwrap();
        assert_eq!(src.encode(&["b".into()]).unwrap(), vec![vec![0.0, 1.0]]);
        assert_eq!(src.backend_calls(), 0);
        assert!(src.encode(&["brand new".into()]).is_err());

        let src = EmbeddingSource::hybrid(&texts, &x, Some(Box::new(MockEncoder::new(2, 0))), 64).unwrap();
        assert_eq!(src.encode(&["brand new".into()]).unwrap()[0].len(), 2);
        assert!(EmbeddingSource::hybrid(&texts, &x, Some(Box::new(MockEncoder::new(5, 0))), 64).is_err());
    }

    #[test]
    fn service_response_shape() {
        let body = json!({"data": [{"embedding": [1.0, 2.0]}, {"embedding": [3, 4]}]});
        assert_eq!(parse_embeddings(&body, 2).unwrap(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(parse_embeddings(&body, 3).is_err());
        assert!(parse_embeddings(&json!({"data": [{"embedding": ["x"]}]}), 1).is_err());
    }
}
