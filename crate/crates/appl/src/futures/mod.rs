//! Lazy string and boolean futures.
//!
//! A [`StringFuture`] is an ordered list of segments, each either ready text
//! or a handle to an in-flight generation. Concatenation is O(n+m) list
//! concatenation and never blocks; only materialization waits.

pub mod pool;

use std::sync::{Arc, Condvar, Mutex, OnceLock};

use crate::backends::GenerationResponse;
use crate::error::GenerationFailed;
use crate::frontend::ast::CmpOpKind;

pub use pool::{GenerationRequest, WorkerPool, DEFAULT_WORKERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandleStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug)]
struct HandleState {
    status: HandleStatus,
    response: Option<GenerationResponse>,
    error: Option<String>,
}

#[derive(Debug)]
struct HandleInner {
    request_id: u64,
    state: Mutex<HandleState>,
    cv: Condvar,
}

/// Shared handle to one asynchronous generation. Resolution is single-writer
/// (the owning worker); any thread may wait for it.
#[derive(Debug, Clone)]
pub struct GenerationHandle {
    inner: Arc<HandleInner>,
}

impl GenerationHandle {
    pub fn new(request_id: u64) -> Self {
        GenerationHandle {
            inner: Arc::new(HandleInner {
                request_id,
                state: Mutex::new(HandleState {
                    status: HandleStatus::Queued,
                    response: None,
                    error: None,
                }),
                cv: Condvar::new(),
            }),
        }
    }

    pub fn request_id(&self) -> u64 {
        self.inner.request_id
    }

    pub fn status(&self) -> HandleStatus {
        self.inner.state.lock().unwrap().status
    }

    pub fn mark_running(&self) {
        self.inner.state.lock().unwrap().status = HandleStatus::Running;
    }

    pub fn resolve(&self, response: GenerationResponse) {
        let mut state = self.inner.state.lock().unwrap();
        state.response = Some(response);
        state.status = HandleStatus::Done;
        self.inner.cv.notify_all();
    }

    pub fn fail(&self, message: impl Into<String>) {
        let mut state = self.inner.state.lock().unwrap();
        state.error = Some(message.into());
        state.status = HandleStatus::Failed;
        self.inner.cv.notify_all();
    }

    /// Block until resolved; returns the response or the recorded error.
    pub fn wait(&self) -> Result<GenerationResponse, GenerationFailed> {
        let mut state = self.inner.state.lock().unwrap();
        while !matches!(state.status, HandleStatus::Done | HandleStatus::Failed) {
            state = self.inner.cv.wait(state).unwrap();
        }
        match state.status {
            HandleStatus::Done => Ok(state.response.clone().expect("done without response")),
            _ => Err(GenerationFailed {
                request_id: self.inner.request_id,
                message: state.error.clone().unwrap_or_else(|| "failed".into()),
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Segment {
    Ready(Arc<str>),
    Pending {
        handle: GenerationHandle,
        format_spec: Option<String>,
    },
}

#[derive(Debug)]
struct FutureInner {
    segments: Vec<Segment>,
    cache: OnceLock<Result<String, GenerationFailed>>,
}

#[derive(Debug, Clone)]
pub struct StringFuture {
    inner: Arc<FutureInner>,
}

impl StringFuture {
    pub fn empty() -> Self {
        StringFuture::from_segments(Vec::new())
    }

    pub fn ready(text: impl Into<String>) -> Self {
        let text: String = text.into();
        StringFuture::from_segments(vec![Segment::Ready(text.into())])
    }

    pub fn pending(handle: GenerationHandle, format_spec: Option<String>) -> Self {
        StringFuture::from_segments(vec![Segment::Pending {
            handle,
            format_spec,
        }])
    }

    pub fn from_segments(segments: Vec<Segment>) -> Self {
        StringFuture {
            inner: Arc::new(FutureInner {
                segments,
                cache: OnceLock::new(),
            }),
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.inner.segments
    }

    /// Lazy concatenation: the segment lists are concatenated without
    /// blocking.
    pub fn concat(&self, other: &StringFuture) -> StringFuture {
        let mut segments =
            Vec::with_capacity(self.inner.segments.len() + other.inner.segments.len());
        segments.extend(self.inner.segments.iter().cloned());
        segments.extend(other.inner.segments.iter().cloned());
        StringFuture::from_segments(segments)
    }

    pub fn concat_all<'a>(parts: impl IntoIterator<Item = &'a StringFuture>) -> StringFuture {
        let mut segments = Vec::new();
        for part in parts {
            segments.extend(part.inner.segments.iter().cloned());
        }
        StringFuture::from_segments(segments)
    }

    /// All generation handles this future references.
    pub fn handles(&self) -> Vec<GenerationHandle> {
        self.inner
            .segments
            .iter()
            .filter_map(|s| match s {
                Segment::Pending { handle, .. } => Some(handle.clone()),
                Segment::Ready(_) => None,
            })
            .collect()
    }

    pub fn is_ready(&self) -> bool {
        self.inner.cache.get().is_some()
            || self
                .inner
                .segments
                .iter()
                .all(|s| matches!(s, Segment::Ready(_)))
    }

    /// Block until every pending segment resolves, join the texts in order
    /// (applying per-segment format specs), and cache the result.
    pub fn materialize(&self) -> Result<String, GenerationFailed> {
        self.inner
            .cache
            .get_or_init(|| {
                let mut out = String::new();
                for segment in &self.inner.segments {
                    match segment {
                        Segment::Ready(text) => out.push_str(text),
                        Segment::Pending {
                            handle,
                            format_spec,
                        } => {
                            let response = handle.wait()?;
                            match format_spec {
                                Some(spec) => out.push_str(&apply_format_spec(&response.text, spec)),
                                None => out.push_str(&response.text),
                            }
                        }
                    }
                }
                Ok(out)
            })
            .clone()
    }

    /// Materialize-then-apply fallback for operations with no lazy rule.
    pub fn delegate<T>(&self, op: impl FnOnce(&str) -> T) -> Result<T, GenerationFailed> {
        Ok(op(&self.materialize()?))
    }
}

impl From<&str> for StringFuture {
    fn from(s: &str) -> Self {
        StringFuture::ready(s)
    }
}

/// Minimal format-spec support: `[fill][<>^]width` alignment for strings.
/// Specs outside this subset are applied as-is-ignored (the text passes
/// through unchanged).
pub fn apply_format_spec(text: &str, spec: &str) -> String {
    let chars: Vec<char> = spec.chars().collect();
    let (fill, align_idx) = match chars.as_slice() {
        [f, a, ..] if matches!(a, '<' | '>' | '^') => (*f, 1),
        [a, ..] if matches!(a, '<' | '>' | '^') => (' ', 0),
        _ => (' ', usize::MAX),
    };
    if align_idx == usize::MAX {
        // Bare width means left-align for strings.
        if let Ok(width) = spec.parse::<usize>() {
            return pad(text, ' ', '<', width);
        }
        return text.to_string();
    }
    let align = chars[align_idx];
    let width: usize = chars[align_idx + 1..]
        .iter()
        .collect::<String>()
        .parse()
        .unwrap_or(0);
    pad(text, fill, align, width)
}

fn pad(text: &str, fill: char, align: char, width: usize) -> String {
    let len = text.chars().count();
    if len >= width {
        return text.to_string();
    }
    let missing = width - len;
    let (left, right) = match align {
        '>' => (missing, 0),
        '^' => (missing / 2, missing - missing / 2),
        _ => (0, missing),
    };
    let mut out = String::new();
    for _ in 0..left {
        out.push(fill);
    }
    out.push_str(text);
    for _ in 0..right {
        out.push(fill);
    }
    out
}

/// A deferred comparison over string futures, forced only when branched upon.
#[derive(Debug, Clone)]
pub struct BooleanFuture {
    op: CmpOpKind,
    lhs: StringFuture,
    rhs: StringFuture,
    cache: Arc<OnceLock<Result<bool, GenerationFailed>>>,
}

impl BooleanFuture {
    pub fn compare(op: CmpOpKind, lhs: StringFuture, rhs: StringFuture) -> Self {
        BooleanFuture {
            op,
            lhs,
            rhs,
            cache: Arc::new(OnceLock::new()),
        }
    }

    /// Materialize operands, evaluate the comparison once, cache the result.
    pub fn force(&self) -> Result<bool, GenerationFailed> {
        self.cache
            .get_or_init(|| {
                let lhs = self.lhs.materialize()?;
                let rhs = self.rhs.materialize()?;
                Ok(match self.op {
                    CmpOpKind::Eq => lhs == rhs,
                    CmpOpKind::Ne => lhs != rhs,
                    CmpOpKind::Lt => lhs < rhs,
                    CmpOpKind::Gt => lhs > rhs,
                })
            })
            .clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::Usage;

    fn resolved(id: u64, text: &str) -> GenerationHandle {
        let handle = GenerationHandle::new(id);
        handle.resolve(GenerationResponse {
            text: text.into(),
            tool_calls: vec![],
            finish_reason: "stop".into(),
            usage: Usage::default(),
        });
        handle
    }

    #[test]
    fn concat_concatenates_segment_lists() {
        let a = StringFuture::ready("a");
        let bc = StringFuture::ready("b").concat(&StringFuture::ready("c"));
        let all = a.concat(&bc);
        assert_eq!(all.segments().len(), 3);
        assert_eq!(all.materialize().unwrap(), "abc");
    }

    #[test]
    fn empty_is_identity() {
        let s = StringFuture::ready("x");
        let joined = s.concat(&StringFuture::empty());
        assert_eq!(joined.segments().len(), s.segments().len());
        assert_eq!(joined.materialize().unwrap(), "x");
        assert_eq!(StringFuture::empty().materialize().unwrap(), "");
    }

    #[test]
    fn pending_segment_materializes() {
        let prefix = StringFuture::ready("A: ");
        let pending = StringFuture::pending(resolved(1, "ok"), None);
        assert_eq!(prefix.concat(&pending).materialize().unwrap(), "A: ok");
    }

    #[test]
    fn failed_dependency_poisons_future() {
        let handle = GenerationHandle::new(9);
        handle.fail("backend exploded");
        let future = StringFuture::pending(handle, None);
        let err = future.materialize().unwrap_err();
        assert_eq!(err.request_id, 9);
    }

    #[test]
    fn materialize_caches() {
        let handle = resolved(1, "x");
        let future = StringFuture::pending(handle, None);
        let first = future.materialize().unwrap();
        let second = future.materialize().unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn format_spec_applied_post_resolution() {
        let future = StringFuture::pending(resolved(1, "ab"), Some(">4".into()));
        assert_eq!(future.materialize().unwrap(), "  ab");
        assert_eq!(apply_format_spec("ab", "<4"), "ab  ");
        assert_eq!(apply_format_spec("ab", "^4"), " ab ");
        assert_eq!(apply_format_spec("ab", "*>4"), "**ab");
        assert_eq!(apply_format_spec("abcde", ">3"), "abcde");
    }

    #[test]
    fn boolean_future_forces_once() {
        let b = BooleanFuture::compare(
            CmpOpKind::Eq,
            StringFuture::pending(resolved(1, "yes"), None),
            StringFuture::ready("yes"),
        );
        assert!(b.force().unwrap());
        assert!(b.force().unwrap());
        let ne = BooleanFuture::compare(
            CmpOpKind::Ne,
            StringFuture::ready("s"),
            StringFuture::ready("s"),
        );
        assert!(!ne.force().unwrap());
    }

    #[test]
    fn delegate_falls_back_to_plain_string_ops() {
        let s = StringFuture::ready("ab").concat(&StringFuture::ready("c"));
        assert_eq!(s.delegate(|t| t.len()).unwrap(), 3);
        let containing = StringFuture::ready("prefix").concat(&StringFuture::pending(
            resolved(1, "tail"),
            None,
        ));
        assert!(containing.delegate(|t| t.contains("prefix")).unwrap());
        assert_eq!(
            StringFuture::empty().delegate(|t| t.to_uppercase()).unwrap(),
            ""
        );
    }
}
