//! Benchmark ingestion.
//!
//! Both supported layouts are JSONL with one question per line. BBQ-like files
//! carry all three options with explicit roles; UNQOVER-like files carry only
//! the two social-group options and get an unknown option appended at load
//! time, drawn from [`unknown_identifiers`].

use std::fmt;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const UNKNOWN_IDENTIFIERS: [&str; 10] = [
    "Can't answer.",
    "Can't be determined.",
    "Cannot answer.",
    "Cannot be determined.",
    "Not answerable.",
    "Not enough info.",
    "Not enough information.",
    "Not known.",
    "Undetermined.",
    "Unknown.",
];

/// The canonical surface forms of the "cannot be determined" answer.
pub fn unknown_identifiers() -> &'static [&'static str] {
    &UNKNOWN_IDENTIFIERS
}

fn normalize_unknown(text: &str) -> String {
    let lowered = text.trim().to_lowercase();
    match lowered.strip_suffix('.') {
        Some(stripped) => stripped.to_string(),
        None => lowered,
    }
}

/// True if `text` spells one of the unknown identifiers, ignoring case,
/// surrounding whitespace and a single trailing period.
pub fn is_unknown_option(text: &str) -> bool {
    let needle = normalize_unknown(text);
    UNKNOWN_IDENTIFIERS.iter().any(|id| normalize_unknown(id) == needle)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dataset {
    #[serde(rename = "bbq-like")]
    BbqLike,
    #[serde(rename = "unqover-like")]
    UnqoverLike,
}

impl Dataset {
    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::BbqLike => "bbq-like",
            Dataset::UnqoverLike => "unqover-like",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionRole {
    Target,
    NonTarget,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Ambiguous,
    Unambiguous,
}

impl QuestionType {
    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::Ambiguous => "ambiguous",
            QuestionType::Unambiguous => "unambiguous",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether the question asks about a harmful attribute. Flips which answer
/// counts as biased.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Negative,
    NonNegative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionEntry {
    pub text: String,
    pub role: OptionRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub dataset: Dataset,
    pub category: String,
    pub context: String,
    pub question: String,
    pub options: Vec<OptionEntry>,
    pub gold_role: OptionRole,
    pub question_type: QuestionType,
    pub polarity: Polarity,
}

impl QuestionRecord {
    /// Checks the structural invariants every loaded record must satisfy.
    pub fn validate(&self) -> Result<(), String> {
        if self.options.len() != 3 {
            return Err(format!("expected 3 options, found {}", self.options.len()));
        }
        for role in [OptionRole::Target, OptionRole::NonTarget, OptionRole::Unknown] {
            let n = self.options.iter().filter(|o| o.role == role).count();
            if n != 1 {
                return Err(format!("expected exactly one {role:?} option, found {n}"));
            }
        }
        if let Some(i) = self.options.iter().position(|o| o.text.trim().is_empty()) {
            return Err(format!("option {i} has empty text"));
        }
        if self.question_type == QuestionType::Ambiguous && self.gold_role != OptionRole::Unknown {
            return Err("ambiguous question must have gold_role unknown".to_string());
        }
        Ok(())
    }

    pub fn option_texts(&self) -> Vec<&str> {
        self.options.iter().map(|o| o.text.as_str()).collect()
    }

    /// Index of the option carrying `role`. Valid records always have one.
    pub fn role_index(&self, role: OptionRole) -> Option<usize> {
        self.options.iter().position(|o| o.role == role)
    }

    /// Retrieval query text: the context followed by the question.
    pub fn query_text(&self) -> String {
        join_nonempty(&[&self.context, &self.question])
    }
}

pub(crate) fn join_nonempty(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("record {id} (line {line}): {message}")]
    Invalid { line: usize, id: String, message: String },
}

impl CorpusError {
    pub fn line(&self) -> Option<usize> {
        match self {
            CorpusError::Io { .. } => None,
            CorpusError::Malformed { line, .. } | CorpusError::Invalid { line, .. } => Some(*line),
        }
    }
}

/// Non-blank lines with 1-based line numbers.
fn jsonl_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub(crate) fn read_text(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_bbq_line(line: usize, raw: &str) -> Result<QuestionRecord, CorpusError> {
    let record: QuestionRecord = serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
        line,
        message: e.to_string(),
    })?;
    record.validate().map_err(|message| CorpusError::Invalid {
        line,
        id: record.id.clone(),
        message,
    })?;
    Ok(record)
}

/// Parses every line of a BBQ-like JSONL document, one result per non-blank
/// line. Used by validation tooling that wants every violation, not just the
/// first.
pub fn scan_bbq_like(text: &str) -> Vec<Result<QuestionRecord, CorpusError>> {
    jsonl_lines(text).map(|(line, raw)| parse_bbq_line(line, raw)).collect()
}

pub fn parse_bbq_like(text: &str) -> Result<Vec<QuestionRecord>, CorpusError> {
    scan_bbq_like(text).into_iter().collect()
}

pub fn load_bbq_like(path: impl AsRef<Path>) -> Result<Vec<QuestionRecord>, CorpusError> {
    parse_bbq_like(&read_text(path.as_ref())?)
}

#[derive(Debug, Deserialize)]
struct UnqoverSource {
    id: String,
    #[serde(default)]
    dataset: Option<Dataset>,
    category: String,
    context: String,
    question: String,
    options: Vec<OptionEntry>,
    #[serde(default)]
    gold_role: Option<OptionRole>,
    #[serde(default)]
    question_type: Option<QuestionType>,
    polarity: Polarity,
}

fn parse_unqover_line(line: usize, raw: &str, rng: &mut ChaCha8Rng) -> Result<QuestionRecord, CorpusError> {
    let src: UnqoverSource = serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
        line,
        message: e.to_string(),
    })?;
    let invalid = |message: String| CorpusError::Invalid {
        line,
        id: src.id.clone(),
        message,
    };
    if src.dataset.is_some_and(|d| d != Dataset::UnqoverLike) {
        return Err(invalid("dataset must be unqover-like".into()));
    }
    if let Some(opt) = src
        .options
        .iter()
        .find(|o| o.role == OptionRole::Unknown || is_unknown_option(&o.text))
    {
        return Err(invalid(format!(
            "source already contains an unknown option {:?}",
            opt.text
        )));
    }
    if src.options.len() != 2 {
        return Err(invalid(format!(
            "expected 2 social-group options, found {}",
            src.options.len()
        )));
    }
    if src.question_type == Some(QuestionType::Unambiguous) {
        return Err(invalid("unqover-like records are always ambiguous".into()));
    }
    if src.gold_role.is_some_and(|r| r != OptionRole::Unknown) {
        return Err(invalid("unqover-like gold_role must be unknown".into()));
    }

    let unknown = UNKNOWN_IDENTIFIERS.choose(rng).expect("identifier list is non-empty");
    let mut options = src.options;
    options.push(OptionEntry {
        text: (*unknown).to_string(),
        role: OptionRole::Unknown,
    });
    let record = QuestionRecord {
        id: src.id,
        dataset: Dataset::UnqoverLike,
        category: src.category,
        context: src.context,
        question: src.question,
        options,
        gold_role: OptionRole::Unknown,
        question_type: QuestionType::Ambiguous,
        polarity: src.polarity,
    };
    record.validate().map_err(|message| CorpusError::Invalid {
        line,
        id: record.id.clone(),
        message,
    })?;
    Ok(record)
}

pub fn scan_unqover_like(text: &str, rng_seed: u64) -> Vec<Result<QuestionRecord, CorpusError>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    jsonl_lines(text)
        .map(|(line, raw)| parse_unqover_line(line, raw, &mut rng))
        .collect()
}

/// Parses UNQOVER-like source lines, appending a seeded unknown option to each.
pub fn parse_unqover_like(text: &str, rng_seed: u64) -> Result<Vec<QuestionRecord>, CorpusError> {
    scan_unqover_like(text, rng_seed).into_iter().collect()
}

pub fn load_unqover_like(path: impl AsRef<Path>, rng_seed: u64) -> Result<Vec<QuestionRecord>, CorpusError> {
    parse_unqover_like(&read_text(path.as_ref())?, rng_seed)
}
