//! The prompt scratchpad: role-tagged records, compositor formatting scopes,
//! the four inter-function context-passing modes, and Definitions.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::backends::WireMessage;
use crate::error::GenerationFailed;
use crate::frontend::ast::CtxMode;
use crate::futures::StringFuture;

pub const DEFAULT_DELIMITER: &str = "\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordOrigin {
    Captured,
    Generated,
    ToolResult,
}

#[derive(Debug, Clone)]
pub struct PromptRecord {
    pub role: Role,
    pub content: StringFuture,
    pub origin: RecordOrigin,
    /// Delimiter joining this record to its predecessor when records merge
    /// into one message.
    pub delimiter: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Indexing {
    #[default]
    None,
    Numbered,
    Dashed,
    Lettered,
}

/// A formatting scope: delimiter, indentation, per-item index prefix, and
/// optional prolog/epilog emitted once per frame.
#[derive(Debug, Clone, Default)]
pub struct Compositor {
    pub delimiter: Option<String>,
    pub indent: String,
    pub indexing: Indexing,
    pub prolog: Option<String>,
    pub epilog: Option<String>,
    /// Part-joining scope: captures accumulate into one record flushed at
    /// pop. Used for the expansion of standalone f-strings so splitting never
    /// introduces separators or extra items.
    pub joiner: bool,
}

impl Compositor {
    pub fn joiner() -> Self {
        Compositor {
            delimiter: Some(String::new()),
            joiner: true,
            ..Default::default()
        }
    }

    pub fn numbered_list(indent: usize) -> Self {
        Compositor {
            indent: " ".repeat(indent),
            indexing: Indexing::Numbered,
            ..Default::default()
        }
    }

    pub fn dashed_list(indent: usize) -> Self {
        Compositor {
            indent: " ".repeat(indent),
            indexing: Indexing::Dashed,
            ..Default::default()
        }
    }

    pub fn tagged(tag: &str) -> Self {
        Compositor {
            prolog: Some(format!("<{tag}>")),
            epilog: Some(format!("</{tag}>")),
            ..Default::default()
        }
    }
}

#[derive(Debug)]
struct Frame {
    comp: Compositor,
    item_counter: usize,
    /// Pending parts of a joiner frame.
    buffer: Vec<StringFuture>,
}

/// A named concept renderable as a reference (`name`) or, once instantiated,
/// as `name: description`.
#[derive(Debug, Clone)]
pub struct Definition {
    pub name: String,
    pub description: Option<String>,
}

impl Definition {
    pub fn reference(&self) -> String {
        self.name.clone()
    }

    pub fn instantiation(&self) -> String {
        match &self.description {
            Some(desc) => format!("{}: {}", self.name, desc),
            None => self.name.clone(),
        }
    }
}

/// Per-function prompt scratchpad.
#[derive(Debug, Default)]
pub struct PromptContext {
    inherited: Vec<PromptRecord>,
    records: Vec<PromptRecord>,
    role_scope: Option<Role>,
    frames: Vec<Frame>,
}

pub type CtxRef = Rc<RefCell<PromptContext>>;

/// Stored contexts for `resume`-mode callees, keyed by callee identity.
#[derive(Debug, Default)]
pub struct ResumeStore {
    contexts: HashMap<String, CtxRef>,
}

impl PromptContext {
    pub fn new() -> Self {
        PromptContext::default()
    }

    pub fn current_role(&self) -> Role {
        self.role_scope.unwrap_or(Role::User)
    }

    pub fn role_scope_active(&self) -> bool {
        self.role_scope.is_some()
    }

    pub fn scope_depth(&self) -> usize {
        self.frames.len() + usize::from(self.role_scope.is_some())
    }

    pub fn enter_role(&mut self, role: Role) {
        debug_assert!(self.role_scope.is_none());
        self.role_scope = Some(role);
    }

    pub fn exit_role(&mut self) {
        self.role_scope = None;
    }

    /// Local records only.
    pub fn records(&self) -> Vec<PromptRecord> {
        self.records.clone()
    }

    /// Inherited plus local records, including any partially accumulated
    /// joiner buffer (so prompts snapshotted mid-f-string see the prefix).
    pub fn convo(&self) -> Vec<PromptRecord> {
        let mut out = self.inherited.clone();
        out.extend(self.records.iter().cloned());
        if let Some(partial) = self.buffered_record() {
            out.push(partial);
        }
        out
    }

    fn buffered_record(&self) -> Option<PromptRecord> {
        let parts: Vec<&StringFuture> = self
            .frames
            .iter()
            .flat_map(|f| f.buffer.iter())
            .collect();
        if parts.is_empty() {
            return None;
        }
        Some(PromptRecord {
            role: self.current_role(),
            content: StringFuture::concat_all(parts.into_iter()),
            origin: RecordOrigin::Captured,
            delimiter: self.active_delimiter(),
        })
    }

    fn active_delimiter(&self) -> String {
        self.frames
            .iter()
            .rev()
            .find_map(|f| f.comp.delimiter.clone())
            .unwrap_or_else(|| DEFAULT_DELIMITER.to_string())
    }

    /// Delimiter for promptifying list values: the innermost frame's, or the
    /// default.
    pub fn list_delimiter(&self) -> String {
        self.active_delimiter()
    }

    fn total_indent(&self) -> String {
        self.frames.iter().map(|f| f.comp.indent.as_str()).collect()
    }

    fn next_index_prefix(&mut self) -> String {
        for frame in self.frames.iter_mut().rev() {
            match frame.comp.indexing {
                Indexing::None => continue,
                indexing => {
                    frame.item_counter += 1;
                    let n = frame.item_counter;
                    return match indexing {
                        Indexing::Numbered => format!("{n}. "),
                        Indexing::Dashed => "- ".to_string(),
                        Indexing::Lettered => {
                            let letter = (b'a' + ((n - 1) % 26) as u8) as char;
                            format!("{letter}. ")
                        }
                        Indexing::None => unreachable!(),
                    };
                }
            }
        }
        String::new()
    }

    /// Append a prompt record for `content` under the current role and
    /// formatting frames.
    pub fn capture_text(&mut self, content: StringFuture) {
        if let Some(frame) = self.frames.last_mut() {
            if frame.comp.joiner {
                frame.buffer.push(content);
                return;
            }
        }
        let indent = self.total_indent();
        let prefix = self.next_index_prefix();
        let delimiter = self.active_delimiter();
        let content = if indent.is_empty() && prefix.is_empty() {
            content
        } else {
            StringFuture::ready(format!("{indent}{prefix}")).concat(&content)
        };
        self.push_record(PromptRecord {
            role: self.current_role(),
            content,
            origin: RecordOrigin::Captured,
            delimiter,
        });
    }

    /// Tool-result records bypass compositor formatting.
    pub fn capture_tool_result(&mut self, content: StringFuture) {
        self.push_record(PromptRecord {
            role: Role::Tool,
            content,
            origin: RecordOrigin::ToolResult,
            delimiter: DEFAULT_DELIMITER.to_string(),
        });
    }

    /// Re-append each record of a bundle, preserving roles.
    pub fn capture_records(&mut self, bundle: &[PromptRecord]) {
        for record in bundle {
            self.push_record(record.clone());
        }
    }

    fn push_record(&mut self, record: PromptRecord) {
        self.records.push(record);
    }

    pub fn push_compositor(&mut self, comp: Compositor) {
        if let Some(prolog) = comp.prolog.clone() {
            // The prolog is emitted under the frame's own indent (and any
            // outer frames').
            let indent = self.total_indent();
            let delimiter = comp
                .delimiter
                .clone()
                .unwrap_or_else(|| self.active_delimiter());
            self.push_record(PromptRecord {
                role: self.current_role(),
                content: StringFuture::ready(format!("{indent}{}{prolog}", comp.indent)),
                origin: RecordOrigin::Captured,
                delimiter,
            });
        }
        self.frames.push(Frame {
            comp,
            item_counter: 0,
            buffer: Vec::new(),
        });
    }

    pub fn pop_compositor(&mut self) {
        let frame = self
            .frames
            .pop()
            .expect("pop_compositor without matching push");
        if frame.comp.joiner {
            let joined = StringFuture::concat_all(frame.buffer.iter());
            if !frame.buffer.is_empty() {
                self.capture_text(joined);
            }
            return;
        }
        if let Some(epilog) = frame.comp.epilog {
            let indent = self.total_indent();
            let delimiter = frame
                .comp
                .delimiter
                .unwrap_or_else(|| self.active_delimiter());
            self.push_record(PromptRecord {
                role: self.current_role(),
                content: StringFuture::ready(format!("{indent}{}{epilog}", frame.comp.indent)),
                origin: RecordOrigin::Captured,
                delimiter,
            });
        }
    }
}

/// Derive the callee's context from the caller's per the four passing modes.
///
/// `new` creates a clean context; `copy` snapshots the caller's visible
/// conversation as read-only inherited records; `same` aliases the caller's
/// context; `resume` behaves as `copy` on the first call and reuses the
/// stored context afterwards.
pub fn derive_context(
    parent: Option<&CtxRef>,
    mode: CtxMode,
    callee_identity: &str,
    resume: &mut ResumeStore,
) -> CtxRef {
    match mode {
        CtxMode::New => Rc::new(RefCell::new(PromptContext::new())),
        CtxMode::Copy => Rc::new(RefCell::new(copy_of(parent))),
        CtxMode::Same => parent
            .cloned()
            .unwrap_or_else(|| Rc::new(RefCell::new(PromptContext::new()))),
        CtxMode::Resume => {
            if let Some(ctx) = resume.contexts.get(callee_identity) {
                ctx.clone()
            } else {
                let ctx = Rc::new(RefCell::new(copy_of(parent)));
                resume
                    .contexts
                    .insert(callee_identity.to_string(), ctx.clone());
                ctx
            }
        }
    }
}

fn copy_of(parent: Option<&CtxRef>) -> PromptContext {
    let mut ctx = PromptContext::new();
    if let Some(parent) = parent {
        ctx.inherited = parent.borrow().convo();
    }
    ctx
}

/// One merged chat message; content may still contain pending segments.
#[derive(Debug, Clone)]
pub struct Message {
    pub role: Role,
    pub content: StringFuture,
}

impl Message {
    pub fn materialize(&self) -> Result<WireMessage, GenerationFailed> {
        Ok(WireMessage {
            role: self.role.as_str().to_string(),
            content: self.content.materialize()?,
        })
    }
}

/// Merge consecutive same-role records into messages. Records are joined by
/// the delimiter captured with the later record; role order is preserved and
/// a trailing assistant record stays as an assistant prefix message.
pub fn render_messages(records: &[PromptRecord]) -> Vec<Message> {
    let mut out: Vec<Message> = Vec::new();
    for record in records {
        match out.last_mut() {
            Some(last) if last.role == record.role => {
                let glued = if record.delimiter.is_empty() {
                    last.content.concat(&record.content)
                } else {
                    last.content
                        .concat(&StringFuture::ready(record.delimiter.clone()))
                        .concat(&record.content)
                };
                last.content = glued;
            }
            _ => out.push(Message {
                role: record.role,
                content: record.content.clone(),
            }),
        }
    }
    out
}

/// Render a bundle to plain text (used for printing return values).
pub fn render_text(records: &[PromptRecord]) -> Result<String, GenerationFailed> {
    let mut out = String::new();
    for (i, record) in records.iter().enumerate() {
        if i > 0 {
            out.push_str(&record.delimiter);
        }
        out.push_str(&record.content.materialize()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn capture(ctx: &mut PromptContext, text: &str) {
        ctx.capture_text(StringFuture::ready(text));
    }

    fn rendered(ctx: &PromptContext) -> Vec<(String, String)> {
        render_messages(&ctx.convo())
            .into_iter()
            .map(|m| {
                (
                    m.role.as_str().to_string(),
                    m.content.materialize().unwrap(),
                )
            })
            .collect()
    }

    #[test]
    fn default_role_is_user() {
        let mut ctx = PromptContext::new();
        capture(&mut ctx, "Q: You need to cook 9 eggs.");
        let msgs = rendered(&ctx);
        assert_eq!(msgs, vec![("user".into(), "Q: You need to cook 9 eggs.".into())]);
    }

    #[test]
    fn role_scope_changes_record_role() {
        let mut ctx = PromptContext::new();
        ctx.enter_role(Role::Assistant);
        capture(&mut ctx, "The name of the author is ");
        ctx.exit_role();
        assert_eq!(ctx.records()[0].role, Role::Assistant);
    }

    #[test]
    fn consecutive_same_role_records_merge() {
        let mut ctx = PromptContext::new();
        capture(&mut ctx, "intro");
        capture(&mut ctx, "quotation");
        let msgs = rendered(&ctx);
        assert_eq!(msgs, vec![("user".into(), "intro\nquotation".into())]);
    }

    #[test]
    fn role_alternation_keeps_separate_messages() {
        let mut ctx = PromptContext::new();
        capture(&mut ctx, "a");
        ctx.enter_role(Role::Assistant);
        capture(&mut ctx, "b");
        ctx.exit_role();
        capture(&mut ctx, "c");
        assert_eq!(rendered(&ctx).len(), 3);
    }

    #[test]
    fn numbered_list_formats_items() {
        let mut ctx = PromptContext::new();
        ctx.push_compositor(Compositor::numbered_list(2));
        capture(&mut ctx, "Input Requirement: Input should ...");
        capture(&mut ctx, "Output Requirement: Output should ...");
        ctx.pop_compositor();
        let msgs = rendered(&ctx);
        assert_eq!(
            msgs[0].1,
            "  1. Input Requirement: Input should ...\n  2. Output Requirement: Output should ..."
        );
    }

    #[test]
    fn empty_frame_emits_prolog_epilog_only() {
        let mut ctx = PromptContext::new();
        ctx.push_compositor(Compositor::tagged("requirements"));
        ctx.pop_compositor();
        let msgs = rendered(&ctx);
        assert_eq!(msgs[0].1, "<requirements>\n</requirements>");

        let mut empty = PromptContext::new();
        empty.push_compositor(Compositor::numbered_list(2));
        empty.pop_compositor();
        assert!(empty.records().is_empty());
    }

    #[test]
    fn tagged_frame_wraps_content() {
        let mut ctx = PromptContext::new();
        ctx.push_compositor(Compositor::tagged("requirements"));
        capture(&mut ctx, "line");
        ctx.pop_compositor();
        let msgs = rendered(&ctx);
        assert_eq!(msgs[0].1, "<requirements>\nline\n</requirements>");
    }

    #[test]
    fn nested_indents_compose() {
        let mut ctx = PromptContext::new();
        ctx.push_compositor(Compositor::numbered_list(2));
        ctx.push_compositor(Compositor::dashed_list(2));
        capture(&mut ctx, "deep");
        ctx.pop_compositor();
        ctx.pop_compositor();
        // indent(A) + indent(B), inner indexing wins.
        assert_eq!(rendered(&ctx)[0].1, "    - deep");
    }

    #[test]
    fn nested_numbered_lists_number_independently() {
        let mut ctx = PromptContext::new();
        ctx.push_compositor(Compositor::numbered_list(0));
        capture(&mut ctx, "outer one");
        ctx.push_compositor(Compositor::numbered_list(2));
        capture(&mut ctx, "inner one");
        ctx.pop_compositor();
        ctx.pop_compositor();
        let text = rendered(&ctx)[0].1.clone();
        assert_eq!(text, "1. outer one\n  1. inner one");
    }

    #[test]
    fn joiner_frame_produces_single_record() {
        let mut ctx = PromptContext::new();
        ctx.push_compositor(Compositor::numbered_list(0));
        ctx.push_compositor(Compositor::joiner());
        capture(&mut ctx, "prefix ");
        capture(&mut ctx, "suffix");
        ctx.pop_compositor();
        ctx.pop_compositor();
        let msgs = rendered(&ctx);
        assert_eq!(msgs[0].1, "1. prefix suffix");
        // One record, one item number.
    }

    #[test]
    fn joiner_buffer_visible_in_convo() {
        let mut ctx = PromptContext::new();
        ctx.push_compositor(Compositor::joiner());
        capture(&mut ctx, "A: ");
        let msgs = rendered(&ctx);
        assert_eq!(msgs[0].1, "A: ");
        ctx.pop_compositor();
    }

    #[test]
    fn copy_mode_isolates_caller() {
        let parent: CtxRef = Rc::new(RefCell::new(PromptContext::new()));
        parent.borrow_mut().capture_text("before".into());
        let mut resume = ResumeStore::default();
        let child = derive_context(Some(&parent), CtxMode::Copy, "callee", &mut resume);
        child.borrow_mut().capture_text("A:".into());
        assert_eq!(rendered(&parent.borrow()).len(), 1);
        assert_eq!(rendered(&child.borrow())[0].1, "before\nA:");
    }

    #[test]
    fn same_mode_shares_context() {
        let parent: CtxRef = Rc::new(RefCell::new(PromptContext::new()));
        let mut resume = ResumeStore::default();
        let child = derive_context(Some(&parent), CtxMode::Same, "callee", &mut resume);
        child.borrow_mut().capture_text("added".into());
        assert_eq!(rendered(&parent.borrow())[0].1, "added");
    }

    #[test]
    fn resume_mode_accumulates() {
        let parent: CtxRef = Rc::new(RefCell::new(PromptContext::new()));
        parent.borrow_mut().capture_text("greeting".into());
        let mut resume = ResumeStore::default();
        let first = derive_context(Some(&parent), CtxMode::Resume, "chat", &mut resume);
        first.borrow_mut().capture_text("turn 1".into());
        let second = derive_context(Some(&parent), CtxMode::Resume, "chat", &mut resume);
        second.borrow_mut().capture_text("turn 2".into());
        let text = rendered(&second.borrow());
        assert_eq!(text[0].1, "greeting\nturn 1\nturn 2");
        assert_eq!(first.borrow().records().len(), 2);
    }

    #[test]
    fn definitions_render() {
        let def = Definition {
            name: "Input Requirement".into(),
            description: None,
        };
        assert_eq!(def.reference(), "Input Requirement");
        let inst = Definition {
            name: "Input Requirement".into(),
            description: Some("Input should ...".into()),
        };
        assert_eq!(inst.instantiation(), "Input Requirement: Input should ...");
        // Uninstantiated definitions render their name.
        assert_eq!(def.instantiation(), "Input Requirement");
    }
}
