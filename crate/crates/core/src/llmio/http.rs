//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendKind, CompletionRequest, CompletionResult};
use crate::error::{Error, Result};

pub struct HttpBackend {
    url: String,
    model: String,
    api_key: Option<String>,
    max_retries: u32,
    backoff: Duration,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    /// `endpoint` is the API base, e.g. `http://localhost:8000/v1`.
    pub fn new(
        endpoint: String,
        model: String,
        api_key: Option<String>,
        max_retries: u32,
        backoff: Duration,
    ) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Backend(format!("http client: {e}")))?;
        Ok(HttpBackend {
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            model,
            api_key,
            max_retries,
            backoff,
            client,
        })
    }

    /// Request body in the chat-completions wire shape.
    pub fn body(&self, request: &CompletionRequest) -> Value {
        json!({
            "model": self.model,
            "messages": request.messages,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        })
    }

    fn attempt(&self, body: &Value) -> std::result::Result<Value, (bool, String)> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| (true, format!("transport: {e}")))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err((true, format!("status {status}")));
        }
        if !status.is_success() {
            return Err((false, format!("status {status}")));
        }
        resp.json::<Value>().map_err(|e| (false, format!("response body: {e}")))
    }
}

/// Extracts text and usage from a chat-completions response.
pub fn parse_response(request: &CompletionRequest, value: &Value) -> Result<CompletionResult> {
    let text = value["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| Error::Backend("response has no choices[0].message.content".into()))?
        .to_string();
    let usage = &value["usage"];
    match (usage["prompt_tokens"].as_u64(), usage["completion_tokens"].as_u64()) {
        (Some(p), Some(c)) => Ok(CompletionResult {
            text,
            prompt_tokens: p,
            completion_tokens: c,
            backend_reported: true,
        }),
        _ => Ok(CompletionResult::proxy(request, text)),
    }
}

impl Backend for HttpBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Http
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult> {
        let body = self.body(request);
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            match self.attempt(&body) {
                Ok(value) => return parse_response(request, &value),
                Err((retryable, msg)) => {
                    tracing::warn!(attempt, %msg, "completion request failed");
                    last = msg;
                    if !retryable {
                        return Err(Error::Backend(last));
                    }
                }
            }
        }
        Err(Error::Backend(format!(
            "exhausted {} retries: {last}",
            self.max_retries
        )))
    }
}
