//! Exhaustive nearest-neighbour search over a neutral question/response
//! corpus. Only the sensitive question of each pair is embedded.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{read_text, CorpusError};
use crate::textmetrics::{cosine, Embedder, EmbeddingVector, MetricError};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("neutral corpus is empty")]
    EmptyCorpus,
    #[error("duplicate pair id {0}")]
    DuplicateId(String),
    #[error("pair {0} has an empty question or response")]
    EmptyText(String),
    #[error("embedding pair {pair_id}: {source}")]
    Embed {
        pair_id: String,
        #[source]
        source: MetricError,
    },
    #[error("k must be between 1 and the index size {size}, got {k}")]
    BadK { k: usize, size: usize },
    #[error("query text is empty")]
    EmptyQuery,
    #[error("query: {0}")]
    Query(#[source] MetricError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeutralPair {
    #[serde(rename = "id")]
    pub pair_id: String,
    #[serde(rename = "question")]
    pub sensitive_question: String,
    #[serde(rename = "response")]
    pub acceptable_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
}

impl NeutralPair {
    pub fn new(id: impl Into<String>, question: impl Into<String>, response: impl Into<String>) -> Self {
        NeutralPair {
            pair_id: id.into(),
            sensitive_question: question.into(),
            acceptable_response: response.into(),
            embedding: None,
        }
    }
}

/// Parses the neutral corpus JSONL (`{"id","question","response"}` per line).
pub fn parse_neutral_corpus(text: &str) -> Result<Vec<NeutralPair>, CorpusError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let pair: NeutralPair = serde_json::from_str(l).map_err(|e| CorpusError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            if pair.sensitive_question.trim().is_empty() || pair.acceptable_response.trim().is_empty() {
                return Err(CorpusError::Invalid {
                    line: i + 1,
                    id: pair.pair_id,
                    message: "question and response must be non-empty".into(),
                });
            }
            Ok(pair)
        })
        .collect()
}

pub fn load_neutral_corpus(path: impl AsRef<Path>) -> Result<Vec<NeutralPair>, CorpusError> {
    parse_neutral_corpus(&read_text(path.as_ref())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { k: DEFAULT_K }
    }
}

/// Immutable index: every pair carries an embedding of its question.
#[derive(Debug, Clone)]
pub struct Index {
    pairs: Vec<NeutralPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair<'a> {
    pub pair: &'a NeutralPair,
    pub score: f64,
}

const EMBED_BATCH: usize = 64;

impl Index {
    pub fn build(pairs: Vec<NeutralPair>, embedder: &dyn Embedder) -> Result<Index, RetrievalError> {
        if pairs.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut seen = HashSet::new();
        for p in &pairs {
            if !seen.insert(p.pair_id.as_str()) {
                return Err(RetrievalError::DuplicateId(p.pair_id.clone()));
            }
            if p.sensitive_question.trim().is_empty() || p.acceptable_response.trim().is_empty() {
                return Err(RetrievalError::EmptyText(p.pair_id.clone()));
            }
        }
        let mut pairs = pairs;
        for chunk in pairs.chunks_mut(EMBED_BATCH) {
            let texts: Vec<&str> = chunk.iter().map(|p| p.sensitive_question.as_str()).collect();
            let vectors = match embedder.embed_batch(&texts) {
                Ok(v) => v,
                Err(source) => {
                    return Err(RetrievalError::Embed {
                        pair_id: chunk[0].pair_id.clone(),
                        source,
                    })
                }
            };
            for (pair, v) in chunk.iter_mut().zip(vectors) {
                if v.norm() == 0.0 {
                    return Err(RetrievalError::Embed {
                        pair_id: pair.pair_id.clone(),
                        source: MetricError::ZeroVector,
                    });
                }
                pair.embedding = Some(v);
            }
        }
        Ok(Index { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[NeutralPair] {
        &self.pairs
    }

    /// The `k` pairs most similar to `query`, by descending cosine, ties by
    /// ascending pair id.
    pub fn top_k_scored(
        &self,
        embedder: &dyn Embedder,
        query: &str,
        k: usize,
    ) -> Result<Vec<ScoredPair<'_>>, RetrievalError> {
        if k == 0 || k > self.pairs.len() {
            return Err(RetrievalError::BadK {
                k,
                size: self.pairs.len(),
            });
        }
        if query.trim().is_empty() {
            return Err(RetrievalError::EmptyQuery);
        }
        let q = embedder.embed(query).map_err(RetrievalError::Query)?;
        let mut scored = self
            .pairs
            .iter()
            .map(|pair| {
                let e = pair.embedding.as_ref().expect("index pairs are embedded");
                cosine(&q, e).map(|score| ScoredPair { pair, score })
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(RetrievalError::Query)?;
        scored.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.pair.pair_id.cmp(&b.pair.pair_id))
        });
        scored.truncate(k);
        Ok(scored)
    }

    pub fn top_k(&self, embedder: &dyn Embedder, query: &str, k: usize) -> Result<Vec<NeutralPair>, RetrievalError> {
        Ok(self
            .top_k_scored(embedder, query, k)?
            .into_iter()
            .map(|s| s.pair.clone())
            .collect())
    }
}
