//! Generation backends and the wire-level request/response types.
//!
//! The wire protocol follows the OpenAI chat-completions JSON shape. Canonical
//! request JSON has a fixed key order and no insignificant whitespace; equal
//! requests serialize identically, which is the basis for non-strict replay
//! grouping.

pub mod http;
pub mod mock;
pub mod toolspec;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::BackendError;

pub use http::HttpBackend;
pub use mock::{MockBackend, ScriptRule};
pub use toolspec::{build_tool_spec, ParamType, ToolDecl, ToolParam};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ToolChoice {
    #[default]
    None,
    Auto,
    Required,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop: Vec<String>,
    pub tool_choice: ToolChoice,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            model: "mock-model".into(),
            temperature: 0.0,
            max_tokens: 256,
            stop: Vec::new(),
            tool_choice: ToolChoice::None,
        }
    }
}

/// One message on the wire, with fully materialized content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: String,
    pub content: String,
}

/// A generation request with all parameters concrete.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcreteRequest {
    pub request_id: u64,
    pub messages: Vec<WireMessage>,
    pub params: GenParams,
    pub tool_specs: Vec<ToolSpec>,
}

/// Canonical JSON for a request: fixed key order, compact separators. The
/// request id is deliberately excluded so identical requests hash equal.
#[derive(Serialize)]
struct CanonicalBody<'a> {
    model: &'a str,
    messages: &'a [WireMessage],
    temperature: f64,
    max_tokens: u32,
    stop: &'a [String],
    tools: &'a [ToolSpec],
    tool_choice: ToolChoice,
}

pub fn canonical_json(req: &ConcreteRequest) -> String {
    serde_json::to_string(&CanonicalBody {
        model: &req.params.model,
        messages: &req.messages,
        temperature: req.params.temperature,
        max_tokens: req.params.max_tokens,
        stop: &req.params.stop,
        tools: &req.tool_specs,
        tool_choice: req.params.tool_choice,
    })
    .expect("canonical request serialization cannot fail")
}

/// A parsed tool call from a generation response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub arguments: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Usage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub tool_calls: Vec<ToolCall>,
    pub finish_reason: String,
    pub usage: Usage,
}

/// Tool specification in the exact OpenAI function-calling wire shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    #[serde(rename = "type")]
    pub kind: String,
    pub function: ToolFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolFunction {
    pub name: String,
    pub description: String,
    pub parameters: ToolParameters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolParameters {
    pub properties: BTreeMap<String, ToolProperty>,
    pub required: Vec<String>,
    #[serde(rename = "type")]
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolProperty {
    pub description: String,
    #[serde(rename = "type")]
    pub type_name: String,
}

/// A chat-completions backend. Implementations are invoked concurrently from
/// worker threads and must be reentrant.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &ConcreteRequest) -> Result<GenerationResponse, BackendError>;
}

/// Whitespace token count; good enough for mock usage accounting.
pub(crate) fn rough_token_count(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}
