//! Tool specification extraction from declared signatures and Google-style
//! docstrings.

use std::collections::BTreeMap;

use crate::error::DocstringParseError;

use super::{ToolFunction, ToolParameters, ToolProperty, ToolSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamType {
    Integer,
    Number,
    String,
    Boolean,
}

impl ParamType {
    pub fn json_name(&self) -> &'static str {
        match self {
            ParamType::Integer => "integer",
            ParamType::Number => "number",
            ParamType::String => "string",
            ParamType::Boolean => "boolean",
        }
    }

    /// Map a declared type name. Accepts both the host-style short names and
    /// the JSON-schema names.
    pub fn parse(name: &str) -> Option<ParamType> {
        match name {
            "int" | "integer" => Some(ParamType::Integer),
            "float" | "number" => Some(ParamType::Number),
            "str" | "string" => Some(ParamType::String),
            "bool" | "boolean" => Some(ParamType::Boolean),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToolParam {
    pub name: String,
    pub ty: ParamType,
    pub has_default: bool,
}

/// The registrable surface of a native tool: name, typed parameter list, and
/// docstring text.
#[derive(Debug, Clone)]
pub struct ToolDecl {
    pub name: String,
    pub docstring: String,
    pub params: Vec<ToolParam>,
}

/// Build the wire tool spec from a declaration.
///
/// The docstring's first line is the description; an `Args:` section lists
/// `name (type): description` entries. Every declared parameter must have an
/// Args entry. Parameters are required unless they declare a default. A
/// `Returns:` section is tolerated and ignored.
pub fn build_tool_spec(decl: &ToolDecl) -> Result<ToolSpec, DocstringParseError> {
    let err = |message: String| DocstringParseError {
        tool: decl.name.clone(),
        message,
    };

    let mut lines = decl.docstring.lines().map(str::trim);
    let description = lines.next().unwrap_or("").to_string();
    if description.is_empty() {
        return Err(err("docstring is missing a description line".into()));
    }

    let mut arg_docs: BTreeMap<String, String> = BTreeMap::new();
    let mut in_args = false;
    for line in lines {
        if line.eq_ignore_ascii_case("args:") {
            in_args = true;
            continue;
        }
        if line.eq_ignore_ascii_case("returns:") {
            in_args = false;
            continue;
        }
        if !in_args || line.is_empty() {
            continue;
        }
        // `name (type): description`
        let (head, doc) = line
            .split_once(':')
            .ok_or_else(|| err(format!("malformed Args line: {line:?}")))?;
        let head = head.trim();
        let name = match head.split_once('(') {
            Some((n, _ty)) => n.trim(),
            None => head,
        };
        arg_docs.insert(name.to_string(), doc.trim().to_string());
    }

    let mut properties = BTreeMap::new();
    let mut required = Vec::new();
    for param in &decl.params {
        let doc = arg_docs.get(&param.name).ok_or_else(|| {
            err(format!(
                "parameter '{}' has no entry in the Args section",
                param.name
            ))
        })?;
        properties.insert(
            param.name.clone(),
            ToolProperty {
                description: doc.clone(),
                type_name: param.ty.json_name().to_string(),
            },
        );
        if !param.has_default {
            required.push(param.name.clone());
        }
    }

    Ok(ToolSpec {
        kind: "function".into(),
        function: ToolFunction {
            name: decl.name.clone(),
            description,
            parameters: ToolParameters {
                properties,
                required,
                kind: "object".into(),
            },
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn is_lucky_decl() -> ToolDecl {
        ToolDecl {
            name: "is_lucky".into(),
            docstring: "Determine whether the input number is a lucky number.\n\nArgs:\n  x (int): The input number to be checked.\n".into(),
            params: vec![ToolParam {
                name: "x".into(),
                ty: ParamType::Integer,
                has_default: false,
            }],
        }
    }

    #[test]
    fn is_lucky_spec_bytes() {
        let spec = build_tool_spec(&is_lucky_decl()).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(
            json,
            "{\"type\":\"function\",\"function\":{\"name\":\"is_lucky\",\"description\":\"Determine whether the input number is a lucky number.\",\"parameters\":{\"properties\":{\"x\":{\"description\":\"The input number to be checked.\",\"type\":\"integer\"}},\"required\":[\"x\"],\"type\":\"object\"}}}"
        );
    }

    #[test]
    fn zero_parameter_tool() {
        let decl = ToolDecl {
            name: "ping".into(),
            docstring: "Ping.\n".into(),
            params: vec![],
        };
        let spec = build_tool_spec(&decl).unwrap();
        assert!(spec.function.parameters.properties.is_empty());
        assert!(spec.function.parameters.required.is_empty());
    }

    #[test]
    fn missing_args_entry_names_parameter() {
        let decl = ToolDecl {
            name: "f".into(),
            docstring: "Does things.\n\nArgs:\n  a (int): first.\n".into(),
            params: vec![
                ToolParam {
                    name: "a".into(),
                    ty: ParamType::Integer,
                    has_default: false,
                },
                ToolParam {
                    name: "b".into(),
                    ty: ParamType::String,
                    has_default: false,
                },
            ],
        };
        let err = build_tool_spec(&decl).unwrap_err();
        assert!(err.to_string().contains("'b'"));
    }

    #[test]
    fn default_valued_params_are_optional() {
        let decl = ToolDecl {
            name: "f".into(),
            docstring: "Does things.\n\nArgs:\n  a (int): first.\n  b (str): second.\nReturns:\n  nothing useful.\n".into(),
            params: vec![
                ToolParam {
                    name: "a".into(),
                    ty: ParamType::Integer,
                    has_default: false,
                },
                ToolParam {
                    name: "b".into(),
                    ty: ParamType::String,
                    has_default: true,
                },
            ],
        };
        let spec = build_tool_spec(&decl).unwrap();
        assert_eq!(spec.function.parameters.required, vec!["a"]);
        assert_eq!(spec.function.parameters.properties.len(), 2);
    }

    #[test]
    fn spec_serialization_is_identity() {
        let spec = build_tool_spec(&is_lucky_decl()).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: crate::backends::ToolSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
