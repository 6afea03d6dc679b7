//! Lexical and embedding similarity.
//!
//! ROUGE scores here are computed on [`TokenSequence`]s produced by
//! [`tokenize`]: lowercase, split on every non-alphanumeric character, no
//! stemming and no stopword removal.

use std::collections::{hash_map::Entry, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("embedding must be non-empty and finite")]
    InvalidEmbedding,
    #[error("embedding transport error: {0}")]
    Transport(String),
    #[error("embedding cache error: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Space-joined form; tokenizing it again yields the same sequence.
    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSequence(iter.into_iter().map(Into::into).collect())
    }
}

pub fn tokenize(text: &str) -> TokenSequence {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|piece| !piece.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RougeVariant {
    #[default]
    #[serde(rename = "rouge-l")]
    RougeL,
    #[serde(rename = "rouge-1")]
    Rouge1,
    #[serde(rename = "rouge-2")]
    Rouge2,
}

impl std::str::FromStr for RougeVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rouge-l" | "l" => Ok(RougeVariant::RougeL),
            "rouge-1" | "1" => Ok(RougeVariant::Rouge1),
            "rouge-2" | "2" => Ok(RougeVariant::Rouge2),
            other => Err(format!("unknown ROUGE variant {other:?}")),
        }
    }
}

pub fn rouge(variant: RougeVariant, reference: &TokenSequence, candidate: &TokenSequence) -> f64 {
    match variant {
        RougeVariant::RougeL => rouge_l(reference, candidate),
        RougeVariant::Rouge1 => rouge_n(1, reference, candidate),
        RougeVariant::Rouge2 => rouge_n(2, reference, candidate),
    }
}

/// F1 from a match count. Equal to 2PR/(P+R) with P = hits/cand and
/// R = hits/ref, written in the form with a single rounding step.
fn f1_from_hits(hits: usize, reference_len: usize, candidate_len: usize) -> f64 {
    if hits == 0 || reference_len == 0 || candidate_len == 0 {
        return 0.0;
    }
    (2 * hits) as f64 / (reference_len + candidate_len) as f64
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y { prev[j] + 1 } else { curr[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// ROUGE-L F1 between two token sequences.
pub fn rouge_l(reference: &TokenSequence, candidate: &TokenSequence) -> f64 {
    let hits = lcs_len(reference.tokens(), candidate.tokens());
    f1_from_hits(hits, reference.len(), candidate.len())
}

/// ROUGE-N F1 with clipped n-gram counts.
pub fn rouge_n(n: usize, reference: &TokenSequence, candidate: &TokenSequence) -> f64 {
    assert!(n >= 1, "n-gram order must be positive");
    fn grams(seq: &TokenSequence, n: usize) -> HashMap<&[String], usize> {
        let mut counts = HashMap::new();
        for w in seq.tokens().windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
        counts
    }
    let ref_len = reference.len().saturating_sub(n - 1);
    let cand_len = candidate.len().saturating_sub(n - 1);
    let ref_grams = grams(reference, n);
    let hits: usize = grams(candidate, n)
        .iter()
        .map(|(g, c)| (*c).min(ref_grams.get(g).copied().unwrap_or(0)))
        .sum();
    f1_from_hits(hits, ref_len, cand_len)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, MetricError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(MetricError::InvalidEmbedding);
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = MetricError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        EmbeddingVector::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, MetricError> {
    if u.dim() != v.dim() {
        return Err(MetricError::DimensionMismatch(u.dim(), v.dim()));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Maps text to a fixed-dimension vector. Implementations must be
/// deterministic and callable from several threads at once.
pub trait Embedder: Send + Sync {
    /// Stable identifier, used to key cached embeddings.
    fn id(&self) -> String;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, MetricError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, MetricError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

pub const DEFAULT_HASH_DIM: usize = 256;

/// Offline embedder: L2-normalized hashed bag of unigrams and bigrams.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(DEFAULT_HASH_DIM)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn bucket(&self, feature: &str) -> usize {
        (fnv1a(feature.as_bytes()) % self.dim as u64) as usize
    }

    /// Raw (unnormalized) feature counts. A text without tokens maps to the
    /// zero vector.
    pub fn counts(&self, text: &str) -> Vec<f64> {
        let tokens = tokenize(text);
        let mut values = vec![0.0; self.dim];
        for t in tokens.tokens() {
            values[self.bucket(&format!("u:{t}"))] += 1.0;
        }
        for w in tokens.tokens().windows(2) {
            values[self.bucket(&format!("b:{} {}", w[0], w[1]))] += 1.0;
        }
        values
    }
}

impl Embedder for HashingEmbedder {
    fn id(&self) -> String {
        format!("hash-bow-{}", self.dim)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, MetricError> {
        let mut values = self.counts(text);
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        EmbeddingVector::new(values)
    }
}

#[derive(Serialize)]
struct EmbeddingsRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

/// Decodes an OpenAI-style `/embeddings` response body.
pub fn decode_embeddings_response(body: &str) -> Result<Vec<EmbeddingVector>, MetricError> {
    let mut resp: EmbeddingsResponse =
        serde_json::from_str(body).map_err(|e| MetricError::Transport(format!("bad body: {e}")))?;
    if resp.data.iter().all(|d| d.index.is_some()) {
        resp.data.sort_by_key(|d| d.index);
    }
    let vectors = resp
        .data
        .into_iter()
        .map(|d| EmbeddingVector::new(d.embedding))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(first) = vectors.first() {
        if let Some(v) = vectors.iter().find(|v| v.values().len() != first.values().len()) {
            return Err(MetricError::DimensionMismatch(first.values().len(), v.values().len()));
        }
    }
    Ok(vectors)
}

/// Client for an OpenAI-compatible embeddings endpoint.
pub struct RemoteEmbedder {
    base_url: String,
    api_key: Option<String>,
    model: String,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, model: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteEmbedder {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            model: model.into(),
            agent,
        }
    }

    /// Reads `EMBED_BASE_URL` and `EMBED_API_KEY`.
    pub fn from_env(model: impl Into<String>) -> Result<Self, MetricError> {
        let base =
            std::env::var("EMBED_BASE_URL").map_err(|_| MetricError::Transport("EMBED_BASE_URL is not set".into()))?;
        Ok(RemoteEmbedder::new(base, std::env::var("EMBED_API_KEY").ok(), model))
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote:{}@{}", self.model, self.base_url)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, MetricError> {
        self.embed_batch(&[text])?
            .pop()
            .ok_or_else(|| MetricError::Transport("empty embeddings response".into()))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, MetricError> {
        let url = format!("{}/embeddings", self.base_url);
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(EmbeddingsRequest {
                model: &self.model,
                input: texts,
            })
            .map_err(|e| MetricError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| MetricError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(MetricError::Transport(format!("HTTP {status}: {body}")));
        }
        let vectors = decode_embeddings_response(&body)?;
        if vectors.len() != texts.len() {
            return Err(MetricError::Transport(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                vectors.len()
            )));
        }
        Ok(vectors)
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    embedder: String,
    hash: String,
    embedding: EmbeddingVector,
}

pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Wraps an embedder with an append-only JSONL cache keyed by
/// (embedder id, SHA-256 of the text).
pub struct CachedEmbedder<E> {
    inner: E,
    path: PathBuf,
    entries: Mutex<HashMap<String, EmbeddingVector>>,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn open(inner: E, path: impl AsRef<Path>) -> Result<Self, MetricError> {
        let path = path.as_ref().to_path_buf();
        let id = inner.id();
        let mut entries = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| MetricError::Cache(e.to_string()))?;
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let entry: CacheLine =
                    serde_json::from_str(line).map_err(|e| MetricError::Cache(format!("line {}: {e}", i + 1)))?;
                if entry.embedder == id {
                    entries.insert(entry.hash, entry.embedding);
                }
            }
        }
        Ok(CachedEmbedder {
            inner,
            path,
            entries: Mutex::new(entries),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn append(&self, hash: &str, embedding: &EmbeddingVector) -> Result<(), MetricError> {
        let line = serde_json::to_string(&CacheLine {
            embedder: self.inner.id(),
            hash: hash.to_string(),
            embedding: embedding.clone(),
        })
        .map_err(|e| MetricError::Cache(e.to_string()))?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| MetricError::Cache(e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| MetricError::Cache(e.to_string()))
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, MetricError> {
        let hash = content_hash(text);
        if let Some(hit) = self.entries.lock().unwrap().get(&hash) {
            return Ok(hit.clone());
        }
        let v = self.inner.embed(text)?;
        let mut entries = self.entries.lock().unwrap();
        if let Entry::Vacant(slot) = entries.entry(hash) {
            self.append(slot.key(), &v)?;
            slot.insert(v.clone());
        }
        Ok(v)
    }
}
