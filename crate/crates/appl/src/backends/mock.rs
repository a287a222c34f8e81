//! Deterministic mock backend with latency injection and scripted responses.

use std::time::Duration;

use regex::Regex;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::BackendError;

use super::{
    canonical_json, rough_token_count, Backend, ConcreteRequest, GenerationResponse, ToolCall,
    ToolChoice, Usage,
};

/// One scripted response rule: a regex over the last user message, first
/// match wins in file order.
#[derive(Debug, Clone, Deserialize)]
pub struct ScriptRule {
    #[serde(with = "serde_regex")]
    pub pattern: Regex,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub tool_calls: Option<Vec<ToolCall>>,
}

mod serde_regex {
    use regex::Regex;
    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Regex, D::Error> {
        let s = String::deserialize(d)?;
        Regex::new(&s).map_err(serde::de::Error::custom)
    }
}

pub struct MockBackend {
    seed: u64,
    latency: Duration,
    script: Vec<ScriptRule>,
    /// When set, the request with this id fails (recovery tests).
    fail_request: Option<u64>,
}

impl MockBackend {
    pub fn new(seed: u64, latency: Duration) -> Self {
        MockBackend {
            seed,
            latency,
            script: Vec::new(),
            fail_request: None,
        }
    }

    pub fn with_script(mut self, script: Vec<ScriptRule>) -> Self {
        self.script = script;
        self
    }

    pub fn with_injected_failure(mut self, request_id: u64) -> Self {
        self.fail_request = Some(request_id);
        self
    }

    pub fn load_script(json: &str) -> Result<Vec<ScriptRule>, serde_json::Error> {
        serde_json::from_str(json)
    }

    fn synthesized_text(&self, request: &ConcreteRequest) -> String {
        let mut hasher = Sha256::new();
        hasher.update(canonical_json(request).as_bytes());
        hasher.update(self.seed.to_le_bytes());
        let digest = hasher.finalize();
        let hex: String = digest[..4].iter().map(|b| format!("{b:02x}")).collect();
        format!("mock-{hex}")
    }

    fn default_tool_call(&self, request: &ConcreteRequest) -> Option<ToolCall> {
        let spec = request.tool_specs.first()?;
        let mut arguments = serde_json::Map::new();
        for (name, prop) in &spec.function.parameters.properties {
            let value = match prop.type_name.as_str() {
                "integer" => serde_json::json!(0),
                "number" => serde_json::json!(0.0),
                "boolean" => serde_json::json!(false),
                _ => serde_json::json!(""),
            };
            arguments.insert(name.clone(), value);
        }
        Some(ToolCall {
            name: spec.function.name.clone(),
            arguments,
        })
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &ConcreteRequest) -> Result<GenerationResponse, BackendError> {
        if self.fail_request == Some(request.request_id) {
            return Err(BackendError::Injected(request.request_id));
        }
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }

        let last_user = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let rule = self.script.iter().find(|r| r.pattern.is_match(last_user));

        let scripted_text = rule.and_then(|r| r.text.clone());
        let scripted_calls = rule.and_then(|r| r.tool_calls.clone());

        let tool_calls = match request.params.tool_choice {
            ToolChoice::None => Vec::new(),
            ToolChoice::Auto => scripted_calls.unwrap_or_default(),
            ToolChoice::Required => match scripted_calls {
                Some(calls) if !calls.is_empty() => calls,
                _ => self
                    .default_tool_call(request)
                    .map(|c| vec![c])
                    .unwrap_or_default(),
            },
        };

        let text = if tool_calls.is_empty() {
            scripted_text.unwrap_or_else(|| self.synthesized_text(request))
        } else {
            scripted_text.unwrap_or_default()
        };

        let prompt_tokens = request
            .messages
            .iter()
            .map(|m| rough_token_count(&m.content))
            .sum();
        let finish_reason = if tool_calls.is_empty() {
            "stop"
        } else {
            "tool_calls"
        };
        Ok(GenerationResponse {
            usage: Usage {
                prompt_tokens,
                completion_tokens: rough_token_count(&text),
            },
            finish_reason: finish_reason.into(),
            text,
            tool_calls,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::time::Instant;

    use super::super::{
        GenParams, ToolFunction, ToolParameters, ToolProperty, ToolSpec, WireMessage,
    };
    use super::*;

    fn request(content: &str) -> ConcreteRequest {
        ConcreteRequest {
            request_id: 1,
            messages: vec![WireMessage {
                role: "user".into(),
                content: content.into(),
            }],
            params: GenParams::default(),
            tool_specs: vec![],
        }
    }

    fn is_lucky_spec() -> ToolSpec {
        let mut properties = BTreeMap::new();
        properties.insert(
            "x".to_string(),
            ToolProperty {
                description: "The input number to be checked.".into(),
                type_name: "integer".into(),
            },
        );
        ToolSpec {
            kind: "function".into(),
            function: ToolFunction {
                name: "is_lucky".into(),
                description: "Determine whether the input number is a lucky number.".into(),
                parameters: ToolParameters {
                    properties,
                    required: vec!["x".into()],
                    kind: "object".into(),
                },
            },
        }
    }

    #[test]
    fn deterministic_for_same_request_and_seed() {
        let backend = MockBackend::new(7, Duration::ZERO);
        let req = request("hello");
        assert_eq!(
            backend.complete(&req).unwrap(),
            backend.complete(&req).unwrap()
        );
    }

    #[test]
    fn different_seeds_differ() {
        let req = request("hello");
        let a = MockBackend::new(1, Duration::ZERO).complete(&req).unwrap();
        let b = MockBackend::new(2, Duration::ZERO).complete(&req).unwrap();
        assert_ne!(a.text, b.text);
    }

    #[test]
    fn required_tool_choice_synthesizes_default_call() {
        let backend = MockBackend::new(0, Duration::ZERO);
        let mut req = request("Is 2024 a lucky number?");
        req.params.tool_choice = ToolChoice::Required;
        req.tool_specs = vec![is_lucky_spec()];
        let resp = backend.complete(&req).unwrap();
        assert_eq!(resp.tool_calls.len(), 1);
        assert_eq!(resp.tool_calls[0].name, "is_lucky");
        assert_eq!(resp.tool_calls[0].arguments["x"], serde_json::json!(0));
        assert_eq!(resp.finish_reason, "tool_calls");
    }

    #[test]
    fn scripted_rule_first_match_wins() {
        let script = MockBackend::load_script(
            r#"[
                {"pattern": "lucky", "text": "first"},
                {"pattern": "lucky number", "text": "second"}
            ]"#,
        )
        .unwrap();
        let backend = MockBackend::new(0, Duration::ZERO).with_script(script);
        let resp = backend.complete(&request("Is 7 a lucky number?")).unwrap();
        assert_eq!(resp.text, "first");
    }

    #[test]
    fn latency_injection_observed() {
        let backend = MockBackend::new(0, Duration::from_millis(30));
        let start = Instant::now();
        backend.complete(&request("hi")).unwrap();
        let elapsed = start.elapsed();
        assert!(elapsed >= Duration::from_millis(30));
        assert!(elapsed < Duration::from_millis(300));
    }

    #[test]
    fn injected_failure_hits_only_target() {
        let backend = MockBackend::new(0, Duration::ZERO).with_injected_failure(2);
        assert!(backend.complete(&request("a")).is_ok());
        let mut failing = request("a");
        failing.request_id = 2;
        assert!(backend.complete(&failing).is_err());
    }
}
