//! Completion backends and the bounded-parallel batch runner.
//!
//! A [`Backend`] performs a single generation attempt. Retries, backoff and
//! parallelism live in [`complete`] and [`run_batch`] so every backend gets
//! the same contract.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_new_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GenerationParams {
    /// Reasoning and guidance generation: temperature 0.6, 64 new tokens.
    pub const REASONING: GenerationParams = GenerationParams {
        temperature: 0.6,
        max_new_tokens: 64,
        seed: None,
    };

    /// Final QA answers: temperature 0.6, 16 new tokens.
    pub const ANSWER: GenerationParams = GenerationParams {
        temperature: 0.6,
        max_new_tokens: 16,
        seed: None,
    };

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_new_tokens == 0 {
            return Err("max_new_tokens must be at least 1".into());
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err("temperature must be a finite non-negative number".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

impl FinishReason {
    fn from_wire(s: Option<&str>) -> Self {
        match s {
            Some("length") => FinishReason::Length,
            _ => FinishReason::Stop,
        }
    }
}

/// Output of one successful backend attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub text: String,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("undecodable response: {0}")]
    Decode(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            BackendError::Decode(_) | BackendError::Config(_) => false,
        }
    }
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<Generation, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<Generation, BackendError> {
        (**self).generate(prompt, params)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<Generation, BackendError> {
        (**self).generate(prompt, params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay() -> Self {
        RetryPolicy {
            base_delay: Duration::ZERO,
            ..RetryPolicy::default()
        }
    }

    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay
            .mul_f64(self.factor.powi(retry.saturating_sub(1) as i32))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub finish_reason: FinishReason,
    /// Wall-clock time; never persisted.
    #[serde(skip)]
    pub latency: Duration,
    pub retries: u32,
}

#[derive(Debug, Clone, Error)]
#[error("completion failed after {} attempt(s): {last}", attempts.len())]
pub struct CompletionError {
    pub attempts: Vec<String>,
    pub last: BackendError,
}

impl CompletionError {
    pub fn retries(&self) -> u32 {
        self.attempts.len().saturating_sub(1) as u32
    }
}

/// One completion with retries and exponential backoff.
pub fn complete(
    backend: &dyn Backend,
    prompt: &str,
    params: &GenerationParams,
    policy: &RetryPolicy,
) -> Result<CompletionResult, CompletionError> {
    let start = Instant::now();
    let mut attempts = Vec::new();
    let mut retries = 0;
    loop {
        match backend.generate(prompt, params) {
            Ok(generation) => {
                let finish_reason = if generation.text.is_empty() {
                    FinishReason::Error
                } else {
                    generation.finish_reason
                };
                return Ok(CompletionResult {
                    text: generation.text,
                    finish_reason,
                    latency: start.elapsed(),
                    retries,
                });
            }
            Err(err) => {
                attempts.push(err.to_string());
                if !err.is_retryable() || retries >= policy.max_retries {
                    return Err(CompletionError { attempts, last: err });
                }
                retries += 1;
                log::debug!("{}: retry {retries} after {err}", backend.id());
                std::thread::sleep(policy.delay(retries));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    /// Caller-side key, usually `stage:record_id[:seed]`.
    pub key: String,
    pub prompt: String,
    pub params: GenerationParams,
}

pub type BatchOutcome = Result<CompletionResult, CompletionError>;

/// Runs every request with at most `max_in_flight` outstanding at once.
/// Results come back in request order; a failed slot never stops the batch.
pub fn run_batch(
    backend: &dyn Backend,
    requests: &[CompletionRequest],
    max_in_flight: usize,
    policy: &RetryPolicy,
) -> Vec<BatchOutcome> {
    assert!(max_in_flight >= 1, "max_in_flight must be at least 1");
    let slots: Vec<Mutex<Option<BatchOutcome>>> = requests.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = max_in_flight.min(requests.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(req) = requests.get(i) else { break };
                let outcome = complete(backend, &req.prompt, &req.params, policy);
                *slots[i].lock().unwrap() = Some(outcome);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every slot is filled"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockMatch {
    Substring(String),
    Pattern(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(rename = "match")]
    pub matcher: MockMatch,
    pub reply: String,
}

/// Rule file for [`MockBackend`]. Rules are tried in order; the first match
/// wins. Replies of `pattern` rules may reference capture groups (`$1`,
/// `${name}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    pub default: String,
}

impl MockScript {
    pub fn parse(text: &str) -> Result<Self, BackendError> {
        serde_json::from_str(text).map_err(|e| BackendError::Config(format!("mock script: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        MockScript::parse(&text)
    }
}

enum CompiledMatcher {
    Substring(String),
    Pattern(Regex),
}

/// Scripted backend. A pure function of (script, prompt); ignores params.
pub struct MockBackend {
    id: String,
    rules: Vec<(CompiledMatcher, String)>,
    default: String,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Result<Self, BackendError> {
        let rules = script
            .rules
            .into_iter()
            .map(|rule| {
                let matcher = match rule.matcher {
                    MockMatch::Substring(s) => CompiledMatcher::Substring(s),
                    MockMatch::Pattern(p) => CompiledMatcher::Pattern(
                        Regex::new(&p).map_err(|e| BackendError::Config(format!("pattern {p:?}: {e}")))?,
                    ),
                };
                Ok((matcher, rule.reply))
            })
            .collect::<Result<_, BackendError>>()?;
        Ok(MockBackend {
            id: "mock".to_string(),
            rules,
            default: script.default,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn reply_for(&self, prompt: &str) -> String {
        for (matcher, reply) in &self.rules {
            match matcher {
                CompiledMatcher::Substring(s) if prompt.contains(s.as_str()) => return reply.clone(),
                CompiledMatcher::Pattern(re) => {
                    if let Some(caps) = re.captures(prompt) {
                        let mut out = String::new();
                        caps.expand(reply, &mut out);
                        return out;
                    }
                }
                _ => {}
            }
        }
        self.default.clone()
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, prompt: &str, _params: &GenerationParams) -> Result<Generation, BackendError> {
        Ok(Generation {
            text: self.reply_for(prompt),
            finish_reason: FinishReason::Stop,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    #[default]
    Completions,
    Chat,
}

impl Endpoint {
    fn path(self) -> &'static str {
        match self {
            Endpoint::Completions => "completions",
            Endpoint::Chat => "chat/completions",
        }
    }
}

/// Builds the JSON request body for an OpenAI-compatible endpoint.
pub fn completion_request_body(
    endpoint: Endpoint,
    model: &str,
    prompt: &str,
    params: &GenerationParams,
) -> serde_json::Value {
    let mut body = serde_json::json!({
        "model": model,
        "temperature": params.temperature,
        "max_tokens": params.max_new_tokens,
    });
    match endpoint {
        Endpoint::Completions => body["prompt"] = prompt.into(),
        Endpoint::Chat => {
            body["messages"] = serde_json::json!([{"role": "user", "content": prompt}]);
        }
    }
    if let Some(seed) = params.seed {
        body["seed"] = seed.into();
    }
    body
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    message: Option<WireMessage>,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Decodes a completions or chat-completions response body.
pub fn decode_completion_response(endpoint: Endpoint, body: &str) -> Result<Generation, BackendError> {
    let resp: WireResponse = serde_json::from_str(body).map_err(|e| BackendError::Decode(e.to_string()))?;
    let choice = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::Decode("response has no choices".into()))?;
    let text = match endpoint {
        Endpoint::Completions => choice.text,
        Endpoint::Chat => choice.message.and_then(|m| m.content),
    }
    .ok_or_else(|| BackendError::Decode("choice carries no text".into()))?;
    Ok(Generation {
        text,
        finish_reason: FinishReason::from_wire(choice.finish_reason.as_deref()),
    })
}

/// Client for OpenAI-compatible `/completions` and `/chat/completions`.
pub struct HttpBackend {
    id: String,
    base_url: String,
    api_key: Option<String>,
    model: String,
    endpoint: Endpoint,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, model: impl Into<String>) -> Self {
        let model = model.into();
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            id: format!("http:{model}"),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            model,
            endpoint: Endpoint::Completions,
            agent,
        }
    }

    pub fn with_endpoint(mut self, endpoint: Endpoint) -> Self {
        self.endpoint = endpoint;
        self
    }

    /// Reads `LLM_BASE_URL`, `LLM_API_KEY` and (unless `model` is given)
    /// `LLM_MODEL`.
    pub fn from_env(model: Option<String>) -> Result<Self, BackendError> {
        let base = std::env::var("LLM_BASE_URL").map_err(|_| BackendError::Config("LLM_BASE_URL is not set".into()))?;
        let model = match model {
            Some(m) => m,
            None => std::env::var("LLM_MODEL").map_err(|_| BackendError::Config("LLM_MODEL is not set".into()))?,
        };
        Ok(HttpBackend::new(base, std::env::var("LLM_API_KEY").ok(), model))
    }

    pub fn model(&self) -> &str {
        &self.model
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<Generation, BackendError> {
        let url = format!("{}/{}", self.base_url, self.endpoint.path());
        let body = completion_request_body(self.endpoint, &self.model, prompt, params);
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Status { status, body: text });
        }
        decode_completion_response(self.endpoint, &text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub key: String,
    pub backend: String,
    pub prompt: String,
    pub params: GenerationParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<FinishReason>,
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TranscriptEntry {
    pub fn new(backend: &str, request: &CompletionRequest, outcome: &BatchOutcome) -> Self {
        let (response, finish_reason, retries, error) = match outcome {
            Ok(r) => (Some(r.text.clone()), Some(r.finish_reason), r.retries, None),
            Err(e) => (None, None, e.retries(), Some(e.to_string())),
        };
        TranscriptEntry {
            key: request.key.clone(),
            backend: backend.to_string(),
            prompt: request.prompt.clone(),
            params: request.params,
            response,
            finish_reason,
            retries,
            error,
        }
    }
}

pub fn write_transcript(path: impl AsRef<Path>, entries: &[TranscriptEntry]) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_transcript(path: impl AsRef<Path>) -> Result<Vec<TranscriptEntry>, BackendError> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| BackendError::Config(e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| BackendError::Config(format!("transcript line {}: {e}", i + 1)))
        })
        .collect()
}

/// Answers prompts from a recorded transcript. Unknown prompts are a
/// configuration error, so a replay never silently diverges.
pub struct ReplayBackend {
    id: String,
    replies: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn from_entries(entries: &[TranscriptEntry]) -> Self {
        let replies = entries
            .iter()
            .filter_map(|e| e.response.as_ref().map(|r| (e.prompt.clone(), r.clone())))
            .collect();
        ReplayBackend {
            id: "replay".to_string(),
            replies,
        }
    }
}

impl Backend for ReplayBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, prompt: &str, _params: &GenerationParams) -> Result<Generation, BackendError> {
        self.replies
            .get(prompt)
            .map(|text| Generation {
                text: text.clone(),
                finish_reason: FinishReason::Stop,
            })
            .ok_or_else(|| BackendError::Config("prompt not present in transcript".into()))
    }
}
