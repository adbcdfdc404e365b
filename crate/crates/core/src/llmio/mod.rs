//! Model backends, proxy token counting and strict JSON parsing.
//!
//! Every model call in the pipeline (agent turns, hint extraction, re-ranking
//! and category classification) goes through [`Backend::complete`]. The
//! scripted and rule-based backends are pure and offline; the HTTP backend
//! speaks the OpenAI-compatible chat-completions wire format.

pub mod http;
pub mod rulebased;
pub mod scripted;

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Message {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    AgentTurn,
    HintExtraction,
    Rerank,
    Classify,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::AgentTurn => "agent_turn",
            Tag::HintExtraction => "hint_extraction",
            Tag::Rerank => "rerank",
            Tag::Classify => "classify",
        }
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agent_turn" => Ok(Tag::AgentTurn),
            "hint_extraction" => Ok(Tag::HintExtraction),
            "rerank" => Ok(Tag::Rerank),
            "classify" => Ok(Tag::Classify),
            other => Err(Error::Invalid(format!("unknown tag `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub messages: Vec<Message>,
    pub max_tokens: u32,
    pub temperature: f64,
    pub tag: Tag,
    /// Episode or task id the call belongs to; routing only, never sent over HTTP.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<String>,
}

impl CompletionRequest {
    /// A single user message; rerank and classify requests are pinned to temperature 0.
    pub fn single(tag: Tag, prompt: impl Into<String>, max_tokens: u32) -> Self {
        CompletionRequest {
            messages: vec![Message::new(Role::User, prompt)],
            max_tokens,
            temperature: 0.0,
            tag,
            session: None,
        }
    }

    pub fn with_session(mut self, session: Option<&str>) -> Self {
        self.session = session.map(str::to_string);
        self
    }

    /// Concatenated message contents.
    pub fn prompt_text(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect()
    }

    /// Proxy prompt size: the sum of per-message counts.
    pub fn proxy_prompt_tokens(&self) -> u64 {
        self.messages.iter().map(|m| count_tokens(&m.content)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub backend_reported: bool,
}

impl CompletionResult {
    /// A result whose usage comes from the proxy tokenizer.
    pub fn proxy(request: &CompletionRequest, text: impl Into<String>) -> Self {
        let text = text.into();
        CompletionResult {
            prompt_tokens: request.proxy_prompt_tokens(),
            completion_tokens: count_tokens(&text),
            text,
            backend_reported: false,
        }
    }

    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Scripted,
    Rulebased,
    Http,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Scripted => "scripted",
            BackendKind::Rulebased => "rulebased",
            BackendKind::Http => "http",
        })
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scripted" => Ok(BackendKind::Scripted),
            "rulebased" => Ok(BackendKind::Rulebased),
            "http" => Ok(BackendKind::Http),
            other => Err(Error::Invalid(format!("unknown backend `{other}`"))),
        }
    }
}

pub trait Backend: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn kind(&self) -> BackendKind {
        (**self).kind()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult> {
        (**self).complete(request)
    }
}

/// Backend selection as it appears in config files. Secrets are named by
/// environment variable only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Scripted queue file: `{"agent_turn": ["..."], ...}`.
    #[serde(default)]
    pub script: Option<String>,
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

impl BackendSpec {
    pub fn rulebased() -> Self {
        BackendSpec {
            kind: BackendKind::Rulebased,
            endpoint: None,
            model: None,
            api_key_env: None,
            max_retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            script: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == BackendKind::Http {
            if self.endpoint.as_deref().unwrap_or("").is_empty() {
                return Err(Error::Config("backend.endpoint: required for http".into()));
            }
            if self.model.as_deref().unwrap_or("").is_empty() {
                return Err(Error::Config("backend.model: required for http".into()));
            }
        }
        if self.kind == BackendKind::Scripted && self.script.is_none() {
            return Err(Error::Config("backend.script: required for scripted".into()));
        }
        Ok(())
    }
}

pub fn build_backend(spec: &BackendSpec) -> Result<Arc<dyn Backend>> {
    spec.validate()?;
    Ok(match spec.kind {
        BackendKind::Rulebased => Arc::new(rulebased::RuleBackend::new()),
        BackendKind::Scripted => {
            let path = spec.script.as_deref().unwrap_or_default();
            Arc::new(scripted::ScriptedBackend::from_file(path)?)
        }
        BackendKind::Http => {
            let key = match &spec.api_key_env {
                Some(var) => Some(std::env::var(var).map_err(|_| {
                    Error::Config(format!("backend.api_key_env: environment variable {var} is not set"))
                })?),
                None => None,
            };
            Arc::new(http::HttpBackend::new(
                spec.endpoint.clone().unwrap_or_default(),
                spec.model.clone().unwrap_or_default(),
                key,
                spec.max_retries,
                std::time::Duration::from_millis(spec.backoff_ms),
            )?)
        }
    })
}

/// Proxy token count: `ceil(bytes / 4)`.
pub fn count_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JsonShape {
    /// `{"hints": [{"text": ...}, ...]}`
    Hints,
    /// `{"answer": [int, ...]}`
    Answer,
}

/// Parses model output that should be a single JSON object.
///
/// One repair pass is allowed: strip markdown fences, then keep the span from
/// the first `{` to the last `}`. The result is then checked against `shape`.
pub fn parse_strict_json(text: &str, shape: JsonShape) -> Result<Value> {
    let value = match serde_json::from_str::<Value>(text.trim()) {
        Ok(v) => v,
        Err(_) => {
            let repaired = repair_json(text);
            serde_json::from_str::<Value>(&repaired)
                .map_err(|e| Error::ParseFailure(format!("not JSON after repair: {e}")))?
        }
    };
    validate_shape(&value, shape)?;
    Ok(value)
}

fn repair_json(text: &str) -> String {
    let mut body: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n");
    if let (Some(a), Some(b)) = (body.find('{'), body.rfind('}')) {
        if a < b {
            body = body[a..=b].to_string();
        }
    }
    body
}

fn validate_shape(value: &Value, shape: JsonShape) -> Result<()> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::SchemaViolation("top level is not an object".into()))?;
    match shape {
        JsonShape::Hints => {
            let hints = obj
                .get("hints")
                .ok_or_else(|| Error::SchemaViolation("missing key `hints`".into()))?
                .as_array()
                .ok_or_else(|| Error::SchemaViolation("`hints` is not a list".into()))?;
            for (i, h) in hints.iter().enumerate() {
                if !h.get("text").is_some_and(Value::is_string) {
                    return Err(Error::SchemaViolation(format!("hints[{i}].text is not a string")));
                }
            }
        }
        JsonShape::Answer => {
            let answer = obj
                .get("answer")
                .ok_or_else(|| Error::SchemaViolation("missing key `answer`".into()))?
                .as_array()
                .ok_or_else(|| Error::SchemaViolation("`answer` is not a list".into()))?;
            for (i, a) in answer.iter().enumerate() {
                if !a.is_i64() && !a.is_u64() {
                    return Err(Error::SchemaViolation(format!("answer[{i}] is not an integer")));
                }
            }
        }
    }
    Ok(())
}

/// Hint texts of a validated `Hints` document.
pub fn hint_texts(value: &Value) -> Vec<String> {
    value["hints"]
        .as_array()
        .map(|hs| {
            hs.iter()
                .filter_map(|h| h["text"].as_str().map(str::to_string))
                .collect()
        })
        .unwrap_or_default()
}

/// Indices of a validated `Answer` document.
pub fn answer_indices(value: &Value) -> Vec<i64> {
    value["answer"]
        .as_array()
        .map(|xs| xs.iter().filter_map(Value::as_i64).collect())
        .unwrap_or_default()
}

/// One completed backend call, as logged by [`RecordingBackend`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub session: Option<String>,
    pub tag: Tag,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Wraps a backend and logs every successful call.
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<CallRecord>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn records(&self) -> Vec<CallRecord> {
        self.log.lock().expect("call log poisoned").clone()
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult> {
        let result = self.inner.complete(request)?;
        self.log.lock().expect("call log poisoned").push(CallRecord {
            session: request.session.clone(),
            tag: request.tag,
            prompt_tokens: result.prompt_tokens,
            completion_tokens: result.completion_tokens,
        });
        Ok(result)
    }
}
