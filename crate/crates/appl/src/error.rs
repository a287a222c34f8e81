//! Error types shared across the pipeline stages.

use thiserror::Error;

use crate::frontend::ast::Span;

#[derive(Debug, Clone, Error)]
#[error("lex error at {span}: {message}")]
pub struct LexError {
    pub message: String,
    pub span: Span,
}

impl LexError {
    pub fn new(message: impl Into<String>, span: Span) -> Self {
        LexError {
            message: message.into(),
            span,
        }
    }
}

#[derive(Debug, Clone, Error)]
#[error("parse error at {span}: {message}")]
pub struct ParseError {
    pub message: String,
    pub span: Span,
}

impl ParseError {
    pub fn new(message: impl Into<String>, span: Span) -> Self {
        ParseError {
            message: message.into(),
            span,
        }
    }
}

#[derive(Debug, Clone, Error)]
#[error("compile error at {span}: {message}")]
pub struct CompileError {
    pub message: String,
    pub span: Span,
}

impl CompileError {
    pub fn new(message: impl Into<String>, span: Span) -> Self {
        CompileError {
            message: message.into(),
            span,
        }
    }
}

/// Any error on the source-to-IR path.
#[derive(Debug, Clone, Error)]
pub enum FrontendError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

/// A generation request failed on the backend or was poisoned by a failed
/// dependency.
#[derive(Debug, Clone, Error)]
#[error("generation request #{request_id} failed: {message}")]
pub struct GenerationFailed {
    pub request_id: u64,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("http error {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("injected failure for request #{0}")]
    Injected(u64),
    #[error("malformed response: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Error)]
#[error("cannot convert {type_name} into a prompt")]
pub struct PromptifyError {
    pub type_name: String,
}

#[derive(Debug, Clone, Error)]
pub enum RuntimeError {
    #[error("runtime error{}: {message}", frames_suffix(.frames))]
    General {
        message: String,
        frames: Vec<String>,
    },
    #[error(transparent)]
    Generation(#[from] GenerationFailed),
    #[error(transparent)]
    Promptify(#[from] PromptifyError),
    #[error("unknown tool '{0}'")]
    UnknownTool(String),
    #[error("tool '{tool}': cannot decode argument '{arg}': {message}")]
    ArgumentDecode {
        tool: String,
        arg: String,
        message: String,
    },
    #[error("runtime is shutting down; generation queue closed")]
    QueueClosed,
    #[error("replay mismatch for request #{request_id}: re-run request differs from the cached one")]
    ReplayMismatch { request_id: u64 },
}

fn frames_suffix(frames: &[String]) -> String {
    if frames.is_empty() {
        String::new()
    } else {
        format!(" (in {})", frames.join(" -> "))
    }
}

impl RuntimeError {
    pub fn msg(message: impl Into<String>) -> Self {
        RuntimeError::General {
            message: message.into(),
            frames: Vec::new(),
        }
    }

    /// Attach the DSL-level call stack, outermost first.
    pub fn with_frames(self, stack: &[String]) -> Self {
        match self {
            RuntimeError::General { message, frames } if frames.is_empty() => {
                RuntimeError::General {
                    message,
                    frames: stack.to_vec(),
                }
            }
            other => other,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed trace line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("invalid speedup stages: {0}")]
    InvalidStages(String),
}

#[derive(Debug, Clone, Error)]
#[error("docstring for tool '{tool}': {message}")]
pub struct DocstringParseError {
    pub tool: String,
    pub message: String,
}

#[derive(Debug, Clone, Error)]
#[error("cannot parse tool calls: {message}; raw: {raw}")]
pub struct ToolCallParseError {
    pub message: String,
    pub raw: String,
}
