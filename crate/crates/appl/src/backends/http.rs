//! OpenAI-compatible chat-completions client with retry and backoff.

use std::time::Duration;

use serde_json::Value;

use crate::error::{BackendError, ToolCallParseError};

use super::{
    rough_token_count, Backend, ConcreteRequest, GenerationResponse, ToolCall, ToolChoice, Usage,
};

const MAX_ATTEMPTS: u32 = 3;
const BASE_BACKOFF_MS: u64 = 200;

pub struct HttpBackend {
    base_url: String,
    api_key: String,
    client: reqwest::blocking::Client,
    backoff: Duration,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        HttpBackend {
            base_url: base_url.into(),
            api_key: api_key.into(),
            client: reqwest::blocking::Client::new(),
            backoff: Duration::from_millis(BASE_BACKOFF_MS),
        }
    }

    /// Shorter backoff for tests.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    pub fn request_body(request: &ConcreteRequest) -> Value {
        let mut body = serde_json::json!({
            "model": request.params.model,
            "messages": request.messages,
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_tokens,
        });
        if !request.params.stop.is_empty() {
            body["stop"] = serde_json::json!(request.params.stop);
        }
        if !request.tool_specs.is_empty() {
            body["tools"] = serde_json::json!(request.tool_specs);
            body["tool_choice"] = match request.params.tool_choice {
                ToolChoice::None => serde_json::json!("none"),
                ToolChoice::Auto => serde_json::json!("auto"),
                ToolChoice::Required => serde_json::json!("required"),
            };
        }
        body
    }

    fn try_once(&self, request: &ConcreteRequest) -> Result<GenerationResponse, BackendError> {
        let response = self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.api_key)
            .json(&Self::request_body(request))
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if status != 200 {
            let excerpt: String = body.chars().take(400).collect();
            return Err(BackendError::Http {
                status,
                body: excerpt,
            });
        }
        let value: Value = serde_json::from_str(&body)
            .map_err(|e| BackendError::Malformed(format!("invalid JSON: {e}")))?;
        parse_response(&value)
    }
}

fn retryable(err: &BackendError) -> bool {
    match err {
        BackendError::Transport(_) => true,
        BackendError::Http { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &ConcreteRequest) -> Result<GenerationResponse, BackendError> {
        let mut attempt = 0;
        loop {
            match self.try_once(request) {
                Ok(resp) => return Ok(resp),
                Err(err) => {
                    attempt += 1;
                    if attempt >= MAX_ATTEMPTS || !retryable(&err) {
                        return Err(err);
                    }
                    std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
                }
            }
        }
    }
}

/// Parse a chat-completions response body into a [`GenerationResponse`].
pub fn parse_response(body: &Value) -> Result<GenerationResponse, BackendError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| BackendError::Malformed("missing choices[0].message".into()))?;
    let text = message
        .get("content")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    let tool_calls =
        parse_tool_calls(message).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let finish_reason = body
        .pointer("/choices/0/finish_reason")
        .and_then(Value::as_str)
        .unwrap_or("stop")
        .to_string();
    let usage = Usage {
        prompt_tokens: body
            .pointer("/usage/prompt_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0) as u32,
        completion_tokens: body
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or_else(|| rough_token_count(&text) as u64) as u32,
    };
    Ok(GenerationResponse {
        text,
        tool_calls,
        finish_reason,
        usage,
    })
}

/// Decode the `tool_calls` array of a response message. The per-call
/// `arguments` field arrives as JSON text and is parsed into an object.
pub fn parse_tool_calls(message: &Value) -> Result<Vec<ToolCall>, ToolCallParseError> {
    let Some(calls) = message.get("tool_calls").and_then(Value::as_array) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::with_capacity(calls.len());
    for call in calls {
        let name = call
            .pointer("/function/name")
            .and_then(Value::as_str)
            .ok_or_else(|| ToolCallParseError {
                message: "missing function.name".into(),
                raw: call.to_string(),
            })?
            .to_string();
        let raw_args = call
            .pointer("/function/arguments")
            .and_then(Value::as_str)
            .unwrap_or("{}");
        let parsed: Value =
            serde_json::from_str(raw_args).map_err(|e| ToolCallParseError {
                message: format!("arguments are not valid JSON: {e}"),
                raw: raw_args.to_string(),
            })?;
        let arguments = match parsed {
            Value::Object(map) => map,
            other => {
                return Err(ToolCallParseError {
                    message: "arguments are not a JSON object".into(),
                    raw: other.to_string(),
                })
            }
        };
        out.push(ToolCall { name, arguments });
    }
    Ok(out)
}
