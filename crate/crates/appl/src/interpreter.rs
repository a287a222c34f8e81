//! Tree-walking evaluator for the IR: dynamic values, context derivation on
//! calls, `with` scopes, control flow over futures, and the builtin registry.
//!
//! The interpreter runs on one thread; all parallelism lives in the futures
//! worker pool. `same`-mode callees execute inline so aliased contexts never
//! cross threads.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::sync::Arc;

use crate::backends::{
    build_tool_spec, GenParams, ToolChoice, ToolDecl, ToolParam, ToolSpec,
};
use crate::compiler::{IrExpr, IrFsPart, IrFunction, IrProgram, IrStmt};
use crate::context::{
    derive_context, render_messages, Compositor, CtxRef, Definition, PromptRecord,
    ResumeStore, Role,
};
use crate::error::{PromptifyError, RuntimeError};
use crate::frontend::ast::{BinOpKind, CmpOpKind, NumLit};
use crate::futures::{
    apply_format_spec, BooleanFuture, GenerationHandle, GenerationRequest, StringFuture,
    WorkerPool,
};
use crate::trace::TraceRecorder;

/// A typed argument or result of a native tool.
#[derive(Debug, Clone, PartialEq)]
pub enum ToolValue {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
}

impl ToolValue {
    pub fn render(&self) -> String {
        match self {
            ToolValue::Int(i) => i.to_string(),
            ToolValue::Float(f) => f.to_string(),
            ToolValue::Str(s) => s.clone(),
            ToolValue::Bool(b) => b.to_string(),
        }
    }
}

pub type ToolFn = Box<dyn Fn(&[ToolValue]) -> ToolValue>;

/// A registered native tool: declaration, derived wire spec, and callable.
pub struct NativeTool {
    pub decl: ToolDecl,
    pub spec: ToolSpec,
    pub func: ToolFn,
}

impl NativeTool {
    pub fn new(decl: ToolDecl, func: ToolFn) -> Result<NativeTool, RuntimeError> {
        let spec = build_tool_spec(&decl)
            .map_err(|e| RuntimeError::msg(e.to_string()))?;
        Ok(NativeTool { decl, spec, func })
    }
}

/// The side-effect-free value returned by `gen`.
#[derive(Debug, Clone)]
pub struct GenResult {
    pub handle: GenerationHandle,
    pub text: StringFuture,
}

#[derive(Debug, Clone)]
pub struct ToolMessage {
    pub tool_name: String,
    pub content: StringFuture,
}

#[derive(Debug, Clone)]
pub enum ScopeValue {
    Compositor(Compositor),
    Role(Role),
}

#[derive(Clone)]
pub enum Value {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    /// Plain strings are fully-ready futures (uniform string model).
    Str(StringFuture),
    BoolFuture(BooleanFuture),
    List(Vec<Value>),
    Bundle(Vec<PromptRecord>),
    Def(Definition),
    Gen(GenResult),
    ToolMsg(ToolMessage),
    Func(String),
    Tool(String),
    Scope(ScopeValue),
}

impl std::fmt::Debug for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::None => write!(f, "None"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Str(_) => write!(f, "<string>"),
            Value::BoolFuture(_) => write!(f, "<bool future>"),
            Value::List(items) => f.debug_list().entries(items).finish(),
            Value::Bundle(records) => write!(f, "<bundle of {}>", records.len()),
            Value::Def(d) => write!(f, "<definition {}>", d.name),
            Value::Gen(g) => write!(f, "<gen #{}>", g.handle.request_id()),
            Value::ToolMsg(m) => write!(f, "<tool message {}>", m.tool_name),
            Value::Func(n) => write!(f, "<function {n}>"),
            Value::Tool(n) => write!(f, "<tool {n}>"),
            Value::Scope(_) => write!(f, "<scope>"),
        }
    }
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::None => "none",
            Value::Bool(_) => "boolean",
            Value::Int(_) => "integer",
            Value::Float(_) => "float",
            Value::Str(_) => "string",
            Value::BoolFuture(_) => "boolean-future",
            Value::List(_) => "list",
            Value::Bundle(_) => "records-bundle",
            Value::Def(_) => "definition",
            Value::Gen(_) => "generation-result",
            Value::ToolMsg(_) => "tool-message",
            Value::Func(_) => "function",
            Value::Tool(_) => "tool",
            Value::Scope(_) => "scope",
        }
    }
}

/// Everything the interpreter needs from its embedder.
pub struct RuntimeEnv {
    pub pool: WorkerPool,
    pub trace: Arc<TraceRecorder>,
    pub tools: HashMap<String, NativeTool>,
    pub default_model: String,
    pub recursion_limit: usize,
    next_request_id: Cell<u64>,
}

impl RuntimeEnv {
    pub fn new(pool: WorkerPool, trace: Arc<TraceRecorder>) -> RuntimeEnv {
        RuntimeEnv {
            pool,
            trace,
            tools: HashMap::new(),
            default_model: std::env::var("APPL_MODEL").unwrap_or_else(|_| "mock-model".into()),
            recursion_limit: 256,
            next_request_id: Cell::new(1),
        }
    }

    pub fn register_tool(&mut self, tool: NativeTool) {
        self.tools.insert(tool.decl.name.clone(), tool);
    }

    fn alloc_request_id(&self) -> u64 {
        let id = self.next_request_id.get();
        self.next_request_id.set(id + 1);
        id
    }
}

enum Flow {
    Normal,
    Return(Value),
}

struct Frame {
    locals: HashMap<String, Value>,
    ctx: Option<CtxRef>,
}

pub struct Interpreter<'a> {
    program: &'a IrProgram,
    env: &'a RuntimeEnv,
    globals: RefCell<HashMap<String, Value>>,
    resume: RefCell<ResumeStore>,
    stack: RefCell<Vec<String>>,
}

/// Run `entry` with the given arguments, draining the worker pool before
/// returning so the trace is complete.
pub fn run_program(
    program: &IrProgram,
    entry: &str,
    args: Vec<Value>,
    env: &RuntimeEnv,
) -> Result<Value, RuntimeError> {
    let interp = Interpreter {
        program,
        env,
        globals: RefCell::new(HashMap::new()),
        resume: RefCell::new(ResumeStore::default()),
        stack: RefCell::new(Vec::new()),
    };
    let result = interp.run(entry, args);
    env.pool.drain();
    if let Some(fatal) = env.pool.take_fatal() {
        return Err(fatal);
    }
    result
}

impl<'a> Interpreter<'a> {
    fn run(&self, entry: &str, args: Vec<Value>) -> Result<Value, RuntimeError> {
        // Top-level statements populate globals first.
        let mut top_frame = Frame {
            locals: HashMap::new(),
            ctx: None,
        };
        for stmt in &self.program.top_level {
            if let Flow::Return(v) = self.exec_stmt(stmt, &mut top_frame)? {
                return Ok(v);
            }
        }
        self.globals.borrow_mut().extend(top_frame.locals);

        let Some(function) = self.program.functions.get(entry) else {
            let available: Vec<&str> = self
                .program
                .functions
                .keys()
                .map(String::as_str)
                .collect();
            return Err(RuntimeError::msg(format!(
                "entry function '{entry}' not found; available: {}",
                if available.is_empty() {
                    "(none)".to_string()
                } else {
                    available.join(", ")
                }
            )));
        };
        self.call(function, args, None)
    }

    fn err(&self, message: impl Into<String>) -> RuntimeError {
        RuntimeError::msg(message).with_frames(&self.stack.borrow())
    }

    fn call(
        &self,
        function: &IrFunction,
        args: Vec<Value>,
        parent_ctx: Option<&CtxRef>,
    ) -> Result<Value, RuntimeError> {
        if args.len() != function.params.len() {
            return Err(self.err(format!(
                "function '{}' expects {} argument(s), got {}",
                function.name,
                function.params.len(),
                args.len()
            )));
        }
        if self.stack.borrow().len() >= self.env.recursion_limit {
            return Err(self.err(format!(
                "recursion limit {} exceeded",
                self.env.recursion_limit
            )));
        }
        let ctx = if function.needs_ctx {
            let mode = function.ctx_mode.unwrap_or_default();
            Some(derive_context(
                parent_ctx,
                mode,
                &function.name,
                &mut self.resume.borrow_mut(),
            ))
        } else {
            None
        };
        let mut frame = Frame {
            locals: function
                .params
                .iter()
                .cloned()
                .zip(args)
                .collect(),
            ctx,
        };
        self.stack.borrow_mut().push(function.name.clone());
        self.env.trace.function_enter(&function.name);
        let mut result = Ok(Value::None);
        for stmt in &function.body {
            match self.exec_stmt(stmt, &mut frame) {
                Ok(Flow::Normal) => {}
                Ok(Flow::Return(v)) => {
                    result = Ok(v);
                    break;
                }
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        self.env.trace.function_exit(&function.name);
        self.stack.borrow_mut().pop();
        result
    }

    fn exec_stmt(&self, stmt: &IrStmt, frame: &mut Frame) -> Result<Flow, RuntimeError> {
        match stmt {
            IrStmt::Capture { expr, .. } => {
                let value = self.eval(expr, frame)?;
                let ctx = frame
                    .ctx
                    .as_ref()
                    .expect("capture verified to run with a context");
                self.capture_value(ctx, value)?;
                Ok(Flow::Normal)
            }
            IrStmt::Eval { expr, .. } => {
                self.eval(expr, frame)?;
                Ok(Flow::Normal)
            }
            IrStmt::Assign { target, expr, .. } => {
                let value = self.eval(expr, frame)?;
                frame.locals.insert(target.clone(), value);
                Ok(Flow::Normal)
            }
            IrStmt::Return { expr, .. } => {
                let value = match expr {
                    Some(expr) => self.eval(expr, frame)?,
                    None => Value::None,
                };
                Ok(Flow::Return(value))
            }
            IrStmt::With { scope, body, .. } => {
                let scope_value = self.eval(scope, frame)?;
                let Value::Scope(scope_value) = scope_value else {
                    return Err(self.err(format!(
                        "'with' needs a role or compositor scope, got {}",
                        scope_value.type_name()
                    )));
                };
                let ctx = frame.ctx.clone().expect("with verified to have context");
                match scope_value {
                    ScopeValue::Role(role) => {
                        {
                            let mut ctx = ctx.borrow_mut();
                            if ctx.scope_depth() > 0 {
                                return Err(self.err(
                                    "role scopes may only be used as the outermost scope",
                                ));
                            }
                            ctx.enter_role(role);
                        }
                        let result = self.exec_body(body, frame);
                        ctx.borrow_mut().exit_role();
                        result
                    }
                    ScopeValue::Compositor(comp) => {
                        ctx.borrow_mut().push_compositor(comp);
                        let result = self.exec_body(body, frame);
                        ctx.borrow_mut().pop_compositor();
                        result
                    }
                }
            }
            IrStmt::For {
                var, iter, body, ..
            } => {
                let items = match self.eval(iter, frame)? {
                    Value::List(items) => items,
                    other => {
                        return Err(self.err(format!(
                            "cannot iterate over {}",
                            other.type_name()
                        )))
                    }
                };
                for item in items {
                    frame.locals.insert(var.clone(), item);
                    if let Flow::Return(v) = self.exec_body(body, frame)? {
                        return Ok(Flow::Return(v));
                    }
                }
                Ok(Flow::Normal)
            }
            IrStmt::If {
                branches,
                else_body,
                ..
            } => {
                for (cond, body) in branches {
                    let cond = self.eval(cond, frame)?;
                    if self.truthy(&cond)? {
                        return self.exec_body(body, frame);
                    }
                }
                if let Some(body) = else_body {
                    return self.exec_body(body, frame);
                }
                Ok(Flow::Normal)
            }
        }
    }

    fn exec_body(&self, body: &[IrStmt], frame: &mut Frame) -> Result<Flow, RuntimeError> {
        for stmt in body {
            if let Flow::Return(v) = self.exec_stmt(stmt, frame)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }

    /// Branch condition evaluation; forcing a boolean future blocks here.
    fn truthy(&self, value: &Value) -> Result<bool, RuntimeError> {
        match value {
            Value::None => Ok(false),
            Value::Bool(b) => Ok(*b),
            Value::Int(i) => Ok(*i != 0),
            Value::Float(f) => Ok(*f != 0.0),
            Value::Str(s) => Ok(!s.materialize()?.is_empty()),
            Value::BoolFuture(b) => Ok(b.force()?),
            Value::List(items) => Ok(!items.is_empty()),
            other => Err(self.err(format!("{} has no truth value", other.type_name()))),
        }
    }

    fn capture_value(&self, ctx: &CtxRef, value: Value) -> Result<(), RuntimeError> {
        match value {
            Value::None => Ok(()), // none-valued captures are skipped
            Value::Bundle(records) => {
                ctx.borrow_mut().capture_records(&records);
                Ok(())
            }
            Value::ToolMsg(msg) => {
                ctx.borrow_mut().capture_tool_result(msg.content);
                Ok(())
            }
            Value::List(items) if items.iter().any(|i| matches!(i, Value::ToolMsg(_))) => {
                for item in items {
                    self.capture_value(ctx, item)?;
                }
                Ok(())
            }
            other => {
                let delimiter = ctx.borrow().list_delimiter();
                let future = self.promptify(&other, &delimiter)?;
                ctx.borrow_mut().capture_text(future);
                Ok(())
            }
        }
    }

    /// Convert a runtime value into a string future.
    pub fn promptify(&self, value: &Value, delimiter: &str) -> Result<StringFuture, RuntimeError> {
        promptify(value, delimiter)
    }

    fn eval(&self, expr: &IrExpr, frame: &mut Frame) -> Result<Value, RuntimeError> {
        match expr {
            IrExpr::Str(s, _) => Ok(Value::Str(StringFuture::ready(s.clone()))),
            IrExpr::Num(NumLit::Int(i), _) => Ok(Value::Int(*i)),
            IrExpr::Num(NumLit::Float(f), _) => Ok(Value::Float(*f)),
            IrExpr::Bool(b, _) => Ok(Value::Bool(*b)),
            IrExpr::NoneLit(_) => Ok(Value::None),
            IrExpr::Name(name, _) => self.lookup(name, frame),
            IrExpr::FString(parts, _) => self.eval_fstring(parts, frame),
            IrExpr::NamedCapture { name, expr, .. } => {
                let value = self.eval(expr, frame)?;
                frame.locals.insert(name.clone(), value.clone());
                Ok(value)
            }
            IrExpr::Call {
                callee,
                args,
                kwargs,
                with_ctx,
                ..
            } => self.eval_call(callee, args, kwargs, *with_ctx, frame),
            IrExpr::BinOp { op, lhs, rhs, .. } => {
                let lhs = self.eval(lhs, frame)?;
                let rhs = self.eval(rhs, frame)?;
                self.binop(*op, lhs, rhs)
            }
            IrExpr::Compare { op, lhs, rhs, .. } => {
                let lhs = self.eval(lhs, frame)?;
                let rhs = self.eval(rhs, frame)?;
                self.compare(*op, lhs, rhs)
            }
            IrExpr::List(items, _) => Ok(Value::List(
                items
                    .iter()
                    .map(|i| self.eval(i, frame))
                    .collect::<Result<_, _>>()?,
            )),
            IrExpr::ListComp {
                elt, var, iter, ..
            } => {
                let items = match self.eval(iter, frame)? {
                    Value::List(items) => items,
                    other => {
                        return Err(self.err(format!(
                            "cannot iterate over {}",
                            other.type_name()
                        )))
                    }
                };
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    frame.locals.insert(var.clone(), item);
                    out.push(self.eval(elt, frame)?);
                }
                Ok(Value::List(out))
            }
            IrExpr::Attribute { obj, attr, .. } => {
                let obj = self.eval(obj, frame)?;
                self.attribute(&obj, attr)
            }
        }
    }

    fn lookup(&self, name: &str, frame: &Frame) -> Result<Value, RuntimeError> {
        if let Some(v) = frame.locals.get(name) {
            return Ok(v.clone());
        }
        if let Some(v) = self.globals.borrow().get(name) {
            return Ok(v.clone());
        }
        if self.program.functions.contains_key(name) {
            return Ok(Value::Func(name.to_string()));
        }
        if self.env.tools.contains_key(name) {
            return Ok(Value::Tool(name.to_string()));
        }
        Err(self.err(format!("name '{name}' is not defined")))
    }

    fn attribute(&self, obj: &Value, attr: &str) -> Result<Value, RuntimeError> {
        match (obj, attr) {
            (Value::ToolMsg(m), "content") => Ok(Value::Str(m.content.clone())),
            (Value::Gen(g), "text") => Ok(Value::Str(g.text.clone())),
            _ => Err(self.err(format!(
                "{} has no attribute '{attr}'",
                obj.type_name()
            ))),
        }
    }

    fn eval_fstring(
        &self,
        parts: &[IrFsPart],
        frame: &mut Frame,
    ) -> Result<Value, RuntimeError> {
        let mut out = StringFuture::empty();
        for part in parts {
            let piece = match part {
                IrFsPart::Lit(text) => StringFuture::ready(text.clone()),
                IrFsPart::Field { expr, format_spec } => {
                    let value = self.eval(expr, frame)?;
                    match (&value, format_spec) {
                        // Format specs on pending generations apply after
                        // the future resolves.
                        (Value::Gen(g), Some(spec)) => {
                            StringFuture::pending(g.handle.clone(), Some(spec.clone()))
                        }
                        (_, Some(spec)) => {
                            let future = self.promptify(&value, "\n")?;
                            if future.is_ready() {
                                StringFuture::ready(apply_format_spec(
                                    &future.materialize()?,
                                    spec,
                                ))
                            } else {
                                // Mixed pending future under a spec: resolve,
                                // then format.
                                StringFuture::ready(apply_format_spec(
                                    &future.materialize()?,
                                    spec,
                                ))
                            }
                        }
                        (_, None) => self.promptify(&value, "\n")?,
                    }
                }
            };
            out = out.concat(&piece);
        }
        Ok(Value::Str(out))
    }

    fn eval_call(
        &self,
        callee: &IrExpr,
        arg_exprs: &[IrExpr],
        kwarg_exprs: &[(String, IrExpr)],
        with_ctx: bool,
        frame: &mut Frame,
    ) -> Result<Value, RuntimeError> {
        // Method-style calls.
        if let IrExpr::Attribute { obj, attr, .. } = callee {
            let obj = self.eval(obj, frame)?;
            return match (&obj, attr.as_str()) {
                (Value::Gen(g), "run_tool_calls") => self.run_tool_calls(g),
                _ => Err(self.err(format!(
                    "{} has no method '{attr}'",
                    obj.type_name()
                ))),
            };
        }

        // Builtins are resolved by name before variable lookup.
        if let IrExpr::Name(name, _) = callee {
            if let Some(result) =
                self.call_builtin(name, arg_exprs, kwarg_exprs, with_ctx, frame)?
            {
                return Ok(result);
            }
        }

        let args: Vec<Value> = arg_exprs
            .iter()
            .map(|a| self.eval(a, frame))
            .collect::<Result<_, _>>()?;
        let callee_value = self.eval(callee, frame)?;

        // Calling a definition instantiates it: `InputReq(desc="...")`.
        if let Value::Def(def) = &callee_value {
            let desc = match (args.as_slice(), kwarg_exprs) {
                ([desc], []) => self.promptify(desc, "\n")?.materialize()?,
                ([], [(key, expr)]) if key == "desc" => {
                    let v = self.eval(expr, frame)?;
                    self.promptify(&v, "\n")?.materialize()?
                }
                _ => {
                    return Err(self.err(format!(
                        "definition '{}' takes a single description (positional or desc=)",
                        def.name
                    )))
                }
            };
            return Ok(Value::Def(Definition {
                name: def.name.clone(),
                description: Some(desc),
            }));
        }

        if !kwarg_exprs.is_empty() {
            return Err(self.err("keyword arguments are only supported on builtins"));
        }
        match callee_value {
            Value::Func(name) => {
                let function = self
                    .program
                    .functions
                    .get(&name)
                    .expect("function names resolve");
                if function.needs_ctx && frame.ctx.is_none() {
                    return Err(self.err(format!(
                        "cannot call @ppl function '{name}' without a prompt context"
                    )));
                }
                self.call(function, args, frame.ctx.as_ref())
            }
            Value::Tool(name) => {
                let tool = &self.env.tools[&name];
                let decoded = self.decode_positional(tool, &args)?;
                Ok(match (tool.func)(&decoded) {
                    ToolValue::Int(i) => Value::Int(i),
                    ToolValue::Float(f) => Value::Float(f),
                    ToolValue::Bool(b) => Value::Bool(b),
                    ToolValue::Str(s) => Value::Str(StringFuture::ready(s)),
                })
            }
            other => Err(self.err(format!("{} is not callable", other.type_name()))),
        }
    }

    fn decode_positional(
        &self,
        tool: &NativeTool,
        args: &[Value],
    ) -> Result<Vec<ToolValue>, RuntimeError> {
        if args.len() != tool.decl.params.len() {
            return Err(self.err(format!(
                "tool '{}' expects {} argument(s), got {}",
                tool.decl.name,
                tool.decl.params.len(),
                args.len()
            )));
        }
        tool.decl
            .params
            .iter()
            .zip(args)
            .map(|(param, value)| self.coerce_tool_value(&tool.decl.name, param, value))
            .collect()
    }

    fn coerce_tool_value(
        &self,
        tool: &str,
        param: &ToolParam,
        value: &Value,
    ) -> Result<ToolValue, RuntimeError> {
        use crate::backends::ParamType;
        let mismatch = |got: &str| RuntimeError::ArgumentDecode {
            tool: tool.to_string(),
            arg: param.name.clone(),
            message: format!("expected {}, got {got}", param.ty.json_name()),
        };
        Ok(match (param.ty, value) {
            (ParamType::Integer, Value::Int(i)) => ToolValue::Int(*i),
            (ParamType::Number, Value::Float(f)) => ToolValue::Float(*f),
            (ParamType::Number, Value::Int(i)) => ToolValue::Float(*i as f64),
            (ParamType::Boolean, Value::Bool(b)) => ToolValue::Bool(*b),
            (ParamType::String, Value::Str(s)) => ToolValue::Str(s.materialize()?),
            (_, other) => return Err(mismatch(other.type_name())),
        })
    }

    /// Builtin dispatch; returns Ok(None) when `name` is not a builtin.
    fn call_builtin(
        &self,
        name: &str,
        arg_exprs: &[IrExpr],
        kwarg_exprs: &[(String, IrExpr)],
        _with_ctx: bool,
        frame: &mut Frame,
    ) -> Result<Option<Value>, RuntimeError> {
        let eval_args = |interp: &Self, frame: &mut Frame| -> Result<Vec<Value>, RuntimeError> {
            arg_exprs.iter().map(|a| interp.eval(a, frame)).collect()
        };
        let no_kwargs = |interp: &Self| -> Result<(), RuntimeError> {
            match kwarg_exprs.first() {
                Some((k, _)) => Err(interp.err(format!(
                    "'{name}' takes no keyword argument '{k}'"
                ))),
                None => Ok(()),
            }
        };
        let ctx = frame.ctx.clone();
        let need_ctx = |interp: &Self| -> Result<CtxRef, RuntimeError> {
            ctx.clone()
                .ok_or_else(|| interp.err(format!("'{name}' requires a prompt context")))
        };

        let value = match name {
            "gen" => {
                let ctx = need_ctx(self)?;
                Some(self.builtin_gen(&ctx, arg_exprs, kwarg_exprs, frame)?)
            }
            "records" => {
                no_kwargs(self)?;
                let ctx = need_ctx(self)?;
                let records = ctx.borrow().records();
                Some(Value::Bundle(records))
            }
            "convo" => {
                no_kwargs(self)?;
                let ctx = need_ctx(self)?;
                let convo = ctx.borrow().convo();
                Some(Value::Bundle(convo))
            }
            "define" => {
                no_kwargs(self)?;
                let args = eval_args(self, frame)?;
                let [name_value] = args.as_slice() else {
                    return Err(self.err("define(name) takes exactly one argument"));
                };
                let name = self.promptify(name_value, "\n")?.materialize()?;
                Some(Value::Def(Definition {
                    name,
                    description: None,
                }))
            }
            "instantiate" => {
                no_kwargs(self)?;
                let args = eval_args(self, frame)?;
                let [def, desc] = args.as_slice() else {
                    return Err(self.err(
                        "instantiate(definition, description) takes two arguments",
                    ));
                };
                let Value::Def(def) = def else {
                    return Err(self.err(format!(
                        "instantiate needs a definition, got {}",
                        def.type_name()
                    )));
                };
                let description = self.promptify(desc, "\n")?.materialize()?;
                Some(Value::Def(Definition {
                    name: def.name.clone(),
                    description: Some(description),
                }))
            }
            "run_tool_calls" => {
                no_kwargs(self)?;
                let args = eval_args(self, frame)?;
                let [Value::Gen(result)] = args.as_slice() else {
                    return Err(self.err(
                        "run_tool_calls takes one generation result",
                    ));
                };
                Some(self.run_tool_calls(result)?)
            }
            "range" => {
                no_kwargs(self)?;
                let args = eval_args(self, frame)?;
                let (start, stop) = match args.as_slice() {
                    [Value::Int(n)] => (0, *n),
                    [Value::Int(a), Value::Int(b)] => (*a, *b),
                    _ => return Err(self.err("range takes one or two integers")),
                };
                Some(Value::List((start..stop).map(Value::Int).collect()))
            }
            "len" => {
                no_kwargs(self)?;
                let args = eval_args(self, frame)?;
                let [arg] = args.as_slice() else {
                    return Err(self.err("len takes one argument"));
                };
                let n = match arg {
                    Value::List(items) => items.len(),
                    Value::Bundle(records) => records.len(),
                    // Length has no lazy rule: materialize, then measure.
                    Value::Str(s) => s.delegate(|t| t.chars().count())?,
                    other => {
                        return Err(self.err(format!(
                            "len is undefined for {}",
                            other.type_name()
                        )))
                    }
                };
                Some(Value::Int(n as i64))
            }
            "str" => {
                no_kwargs(self)?;
                let args = eval_args(self, frame)?;
                let [arg] = args.as_slice() else {
                    return Err(self.err("str takes one argument"));
                };
                Some(Value::Str(self.promptify(arg, "\n")?))
            }
            "NumberedList" | "DashedList" => {
                let indent = self.scope_indent(arg_exprs, kwarg_exprs, frame)?;
                let comp = if name == "NumberedList" {
                    Compositor::numbered_list(indent)
                } else {
                    Compositor::dashed_list(indent)
                };
                Some(Value::Scope(ScopeValue::Compositor(comp)))
            }
            "Tagged" => {
                no_kwargs(self)?;
                let args = eval_args(self, frame)?;
                let [tag] = args.as_slice() else {
                    return Err(self.err("Tagged(tag) takes one argument"));
                };
                let tag = self.promptify(tag, "\n")?.materialize()?;
                Some(Value::Scope(ScopeValue::Compositor(Compositor::tagged(
                    &tag,
                ))))
            }
            "Str" => {
                no_kwargs(self)?;
                if !arg_exprs.is_empty() {
                    return Err(self.err("Str() takes no arguments"));
                }
                Some(Value::Scope(ScopeValue::Compositor(Compositor::joiner())))
            }
            "AIRole" => Some(Value::Scope(ScopeValue::Role(Role::Assistant))),
            "SystemRole" => Some(Value::Scope(ScopeValue::Role(Role::System))),
            "UserRole" => Some(Value::Scope(ScopeValue::Role(Role::User))),
            "ToolRole" => Some(Value::Scope(ScopeValue::Role(Role::Tool))),
            _ => None,
        };
        Ok(value)
    }

    fn scope_indent(
        &self,
        arg_exprs: &[IrExpr],
        kwarg_exprs: &[(String, IrExpr)],
        frame: &mut Frame,
    ) -> Result<usize, RuntimeError> {
        let mut indent = 0usize;
        let as_indent = |interp: &Self, v: Value| -> Result<usize, RuntimeError> {
            match v {
                Value::Int(i) if i >= 0 => Ok(i as usize),
                other => Err(interp.err(format!(
                    "indent must be a non-negative integer, got {}",
                    other.type_name()
                ))),
            }
        };
        if let Some(expr) = arg_exprs.first() {
            let v = self.eval(expr, frame)?;
            indent = as_indent(self, v)?;
        }
        for (key, expr) in kwarg_exprs {
            if key != "indent" {
                return Err(self.err(format!("unknown keyword argument '{key}'")));
            }
            let v = self.eval(expr, frame)?;
            indent = as_indent(self, v)?;
        }
        Ok(indent)
    }

    /// `gen(...)`: snapshot the conversation, schedule the request, and
    /// return immediately. The result enters the prompt only if captured.
    fn builtin_gen(
        &self,
        ctx: &CtxRef,
        arg_exprs: &[IrExpr],
        kwarg_exprs: &[(String, IrExpr)],
        frame: &mut Frame,
    ) -> Result<Value, RuntimeError> {
        if !arg_exprs.is_empty() {
            return Err(self.err("gen takes keyword arguments only"));
        }
        let mut params = GenParams {
            model: self.env.default_model.clone(),
            ..GenParams::default()
        };
        let mut tool_specs: Vec<ToolSpec> = Vec::new();
        for (key, expr) in kwarg_exprs {
            let value = self.eval(expr, frame)?;
            match key.as_str() {
                "model" => params.model = self.promptify(&value, "\n")?.materialize()?,
                "temperature" => {
                    params.temperature = match value {
                        Value::Float(f) => f,
                        Value::Int(i) => i as f64,
                        other => {
                            return Err(self.err(format!(
                                "temperature must be a number, got {}",
                                other.type_name()
                            )))
                        }
                    }
                }
                "max_tokens" => {
                    params.max_tokens = match value {
                        Value::Int(i) if i > 0 => i as u32,
                        other => {
                            return Err(self.err(format!(
                                "max_tokens must be a positive integer, got {:?}",
                                other
                            )))
                        }
                    }
                }
                "stop" => {
                    let Value::List(items) = value else {
                        return Err(self.err("stop must be a list of strings"));
                    };
                    params.stop = items
                        .iter()
                        .map(|i| Ok(self.promptify(i, "\n")?.materialize()?))
                        .collect::<Result<_, RuntimeError>>()?;
                }
                "tools" => {
                    let Value::List(items) = value else {
                        return Err(self.err("tools must be a list"));
                    };
                    for item in items {
                        let Value::Tool(name) = item else {
                            return Err(self.err(format!(
                                "tools entries must be registered tools, got {}",
                                item.type_name()
                            )));
                        };
                        tool_specs.push(self.env.tools[&name].spec.clone());
                    }
                }
                "tool_choice" => {
                    let text = self.promptify(&value, "\n")?.materialize()?;
                    params.tool_choice = match text.as_str() {
                        "none" => ToolChoice::None,
                        "auto" => ToolChoice::Auto,
                        "required" => ToolChoice::Required,
                        other => {
                            return Err(self.err(format!(
                                "tool_choice must be none/auto/required, got '{other}'"
                            )))
                        }
                    };
                }
                other => {
                    return Err(self.err(format!("gen got an unknown keyword argument '{other}'")))
                }
            }
        }
        if !tool_specs.is_empty() && params.tool_choice == ToolChoice::None {
            // Tools offered without an explicit choice default to auto.
            params.tool_choice = ToolChoice::Auto;
        }
        if params.tool_choice == ToolChoice::Required && tool_specs.is_empty() {
            return Err(self.err("tool_choice='required' needs a non-empty tools list"));
        }

        let request_id = self.env.alloc_request_id();
        let handle = GenerationHandle::new(request_id);
        let messages = render_messages(&ctx.borrow().convo());
        self.env.pool.schedule(GenerationRequest {
            request_id,
            messages,
            params,
            tool_specs,
            handle: handle.clone(),
        })?;
        let text = StringFuture::pending(handle.clone(), None);
        Ok(Value::Gen(GenResult { handle, text }))
    }

    /// Block on the generation, run each parsed tool call against the native
    /// registry, and return the tool messages.
    fn run_tool_calls(&self, result: &GenResult) -> Result<Value, RuntimeError> {
        let response = result.handle.wait()?;
        let mut messages = Vec::with_capacity(response.tool_calls.len());
        for call in &response.tool_calls {
            let tool = self
                .env
                .tools
                .get(&call.name)
                .ok_or_else(|| RuntimeError::UnknownTool(call.name.clone()))?;
            let mut decoded = Vec::with_capacity(tool.decl.params.len());
            for key in call.arguments.keys() {
                if !tool.decl.params.iter().any(|p| &p.name == key) {
                    return Err(RuntimeError::ArgumentDecode {
                        tool: call.name.clone(),
                        arg: key.clone(),
                        message: "unexpected argument".into(),
                    });
                }
            }
            for param in &tool.decl.params {
                let value = call.arguments.get(&param.name).ok_or_else(|| {
                    RuntimeError::ArgumentDecode {
                        tool: call.name.clone(),
                        arg: param.name.clone(),
                        message: "missing argument".into(),
                    }
                })?;
                decoded.push(decode_json_arg(&call.name, param, value)?);
            }
            let output = (tool.func)(&decoded);
            messages.push(Value::ToolMsg(ToolMessage {
                tool_name: call.name.clone(),
                content: StringFuture::ready(output.render()),
            }));
        }
        Ok(Value::List(messages))
    }

    fn binop(&self, op: BinOpKind, lhs: Value, rhs: Value) -> Result<Value, RuntimeError> {
        use BinOpKind::*;
        Ok(match (op, &lhs, &rhs) {
            (Add, Value::Int(a), Value::Int(b)) => Value::Int(a + b),
            (Sub, Value::Int(a), Value::Int(b)) => Value::Int(a - b),
            (Mul, Value::Int(a), Value::Int(b)) => Value::Int(a * b),
            (Add, Value::Float(a), Value::Float(b)) => Value::Float(a + b),
            (Sub, Value::Float(a), Value::Float(b)) => Value::Float(a - b),
            (Mul, Value::Float(a), Value::Float(b)) => Value::Float(a * b),
            (Add, Value::Int(a), Value::Float(b)) => Value::Float(*a as f64 + b),
            (Add, Value::Float(a), Value::Int(b)) => Value::Float(a + *b as f64),
            (Add, Value::List(a), Value::List(b)) => {
                let mut out = a.clone();
                out.extend(b.iter().cloned());
                Value::List(out)
            }
            // String concatenation stays lazy.
            (Add, _, _) if is_stringish(&lhs) && is_stringish(&rhs) => {
                let l = self.promptify(&lhs, "\n")?;
                let r = self.promptify(&rhs, "\n")?;
                Value::Str(l.concat(&r))
            }
            _ => {
                return Err(self.err(format!(
                    "unsupported operand types for '{}': {} and {}",
                    op.as_str(),
                    lhs.type_name(),
                    rhs.type_name()
                )))
            }
        })
    }

    fn compare(&self, op: CmpOpKind, lhs: Value, rhs: Value) -> Result<Value, RuntimeError> {
        use CmpOpKind::*;
        // Comparisons touching string futures defer until branched on.
        if is_stringish(&lhs) || is_stringish(&rhs) {
            let l = self.promptify(&lhs, "\n")?;
            let r = self.promptify(&rhs, "\n")?;
            return Ok(Value::BoolFuture(BooleanFuture::compare(op, l, r)));
        }
        let result = match (&lhs, &rhs) {
            (Value::Int(a), Value::Int(b)) => match op {
                Eq => a == b,
                Ne => a != b,
                Lt => a < b,
                Gt => a > b,
            },
            (Value::Float(a), Value::Float(b)) => match op {
                Eq => a == b,
                Ne => a != b,
                Lt => a < b,
                Gt => a > b,
            },
            (Value::Bool(a), Value::Bool(b)) => match op {
                Eq => a == b,
                Ne => a != b,
                _ => {
                    return Err(self.err("booleans support only equality comparison"));
                }
            },
            (Value::None, Value::None) => matches!(op, Eq),
            (Value::None, _) | (_, Value::None) => matches!(op, Ne),
            _ => {
                return Err(self.err(format!(
                    "cannot compare {} with {}",
                    lhs.type_name(),
                    rhs.type_name()
                )))
            }
        };
        Ok(Value::Bool(result))
    }
}

/// Convert a runtime value into a string future, joining lists with
/// `delimiter`.
pub fn promptify(value: &Value, delimiter: &str) -> Result<StringFuture, RuntimeError> {
    match value {
        Value::Str(s) => Ok(s.clone()),
        Value::Gen(g) => Ok(g.text.clone()),
        Value::Int(i) => Ok(StringFuture::ready(i.to_string())),
        Value::Float(f) => Ok(StringFuture::ready(f.to_string())),
        Value::Bool(b) => Ok(StringFuture::ready(b.to_string())),
        Value::Def(d) => Ok(StringFuture::ready(d.instantiation())),
        Value::ToolMsg(m) => Ok(m.content.clone()),
        Value::BoolFuture(b) => Ok(StringFuture::ready(b.force()?.to_string())),
        Value::List(items) => {
            let parts: Result<Vec<StringFuture>, RuntimeError> = items
                .iter()
                .map(|i| promptify(i, delimiter))
                .collect();
            let parts = parts?;
            let sep = StringFuture::ready(delimiter);
            let mut joined = StringFuture::empty();
            for (i, part) in parts.iter().enumerate() {
                if i > 0 {
                    joined = joined.concat(&sep);
                }
                joined = joined.concat(part);
            }
            Ok(joined)
        }
        Value::Bundle(records) => {
            let mut joined = StringFuture::empty();
            for (i, record) in records.iter().enumerate() {
                if i > 0 {
                    joined = joined.concat(&StringFuture::ready(record.delimiter.clone()));
                }
                joined = joined.concat(&record.content);
            }
            Ok(joined)
        }
        other => Err(RuntimeError::Promptify(PromptifyError {
            type_name: other.type_name().to_string(),
        })),
    }
}

fn is_stringish(value: &Value) -> bool {
    matches!(value, Value::Str(_) | Value::Gen(_))
}

fn decode_json_arg(
    tool: &str,
    param: &ToolParam,
    value: &serde_json::Value,
) -> Result<ToolValue, RuntimeError> {
    use crate::backends::ParamType;
    let mismatch = || RuntimeError::ArgumentDecode {
        tool: tool.to_string(),
        arg: param.name.clone(),
        message: format!("expected {}, got {value}", param.ty.json_name()),
    };
    Ok(match param.ty {
        ParamType::Integer => ToolValue::Int(value.as_i64().ok_or_else(mismatch)?),
        ParamType::Number => ToolValue::Float(value.as_f64().ok_or_else(mismatch)?),
        ParamType::String => ToolValue::Str(value.as_str().ok_or_else(mismatch)?.to_string()),
        ParamType::Boolean => ToolValue::Bool(value.as_bool().ok_or_else(mismatch)?),
    })
}

/// The demo tool registry: `is_lucky` and `search`.
pub fn default_tools() -> Vec<NativeTool> {
    use crate::backends::ParamType;
    let is_lucky = NativeTool::new(
        ToolDecl {
            name: "is_lucky".into(),
            docstring: "Determine whether the input number is a lucky number.\n\n\
                        Args:\n  x (int): The input number to be checked.\n"
                .into(),
            params: vec![ToolParam {
                name: "x".into(),
                ty: ParamType::Integer,
                has_default: false,
            }],
        },
        Box::new(|args| {
            let ToolValue::Int(x) = args[0] else {
                unreachable!("decoded by declared type")
            };
            ToolValue::Bool(is_prime(x + 3))
        }),
    )
    .expect("is_lucky docstring is valid");
    let search = NativeTool::new(
        ToolDecl {
            name: "search".into(),
            docstring: "Search the web for a query and return a short summary.\n\n\
                        Args:\n  query (str): The search query.\n"
                .into(),
            params: vec![ToolParam {
                name: "query".into(),
                ty: ParamType::String,
                has_default: false,
            }],
        },
        Box::new(|args| {
            let ToolValue::Str(query) = &args[0] else {
                unreachable!("decoded by declared type")
            };
            ToolValue::Str(format!("results for '{query}': (no relevant hits)"))
        }),
    )
    .expect("search docstring is valid");
    vec![is_lucky, search]
}

fn is_prime(n: i64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use crate::backends::MockBackend;
    use crate::compiler::compile;
    use crate::context::render_text;
    use crate::trace::TraceEvent;

    use super::*;

    fn env_with(backend: MockBackend, workers: usize) -> RuntimeEnv {
        let trace = Arc::new(TraceRecorder::new(None, 0).unwrap());
        let pool = WorkerPool::new(workers, Arc::new(backend), trace.clone(), None);
        let mut env = RuntimeEnv::new(pool, trace);
        env.default_model = "mock-model".into();
        for tool in default_tools() {
            env.register_tool(tool);
        }
        env
    }

    fn run(source: &str, env: &RuntimeEnv) -> Result<Value, RuntimeError> {
        let program = compile(source).unwrap();
        run_program(&program, "main", vec![], env)
    }

    fn run_text(source: &str, env: &RuntimeEnv) -> String {
        fn text_of(value: &Value) -> String {
            match value {
                Value::Str(s) => s.materialize().unwrap(),
                Value::ToolMsg(m) => m.content.materialize().unwrap(),
                Value::Bundle(records) => render_text(records).unwrap(),
                Value::List(items) => items
                    .iter()
                    .map(text_of)
                    .collect::<Vec<_>>()
                    .join("\n"),
                other => panic!("expected text, got {other:?}"),
            }
        }
        text_of(&run(source, env).unwrap())
    }

    #[test]
    fn capture_and_return_records() {
        let env = env_with(MockBackend::new(0, Duration::ZERO), 2);
        let out = run_text(
            "@ppl\ndef main():\n    \"line one\"\n    \"line two\"\n    return records()\n",
            &env,
        );
        assert_eq!(out, "line one\nline two");
    }

    #[test]
    fn zero_gen_program_contacts_no_backend() {
        let env = env_with(MockBackend::new(0, Duration::ZERO).with_injected_failure(1), 2);
        let out = run_text("@ppl\ndef main():\n    \"x\"\n    return records()\n", &env);
        assert_eq!(out, "x");
        let sends = env
            .trace
            .events()
            .iter()
            .filter(|e| matches!(e, TraceEvent::SendRequest { .. }))
            .count();
        assert_eq!(sends, 0);
    }

    #[test]
    fn gen_is_side_effect_free_until_captured() {
        let env = env_with(MockBackend::new(0, Duration::ZERO), 2);
        let out = run_text(
            "@ppl\ndef main():\n    \"prompt\"\n    x = gen()\n    return convo()\n",
            &env,
        );
        assert_eq!(out, "prompt");
    }

    #[test]
    fn captured_gen_appends_to_context() {
        let env = env_with(MockBackend::new(0, Duration::ZERO), 2);
        let out = run_text(
            "@ppl\ndef main():\n    \"prompt\"\n    (x := gen())\n    return convo()\n",
            &env,
        );
        assert!(out.starts_with("prompt\nmock-"), "{out}");
    }

    #[test]
    fn fstring_split_snapshot_includes_prefix() {
        // The gen scheduled inside the f-string must see "A: " in its last
        // message, and the captured record equals prefix + output.
        let env = env_with(MockBackend::new(0, Duration::ZERO), 2);
        let out = run_text(
            "@ppl\ndef main():\n    f\"A: {gen()}\"\n    return records()\n",
            &env,
        );
        assert!(out.starts_with("A: mock-"), "{out}");
        let events = env.trace.events();
        let payload = events
            .iter()
            .find_map(|e| match e {
                TraceEvent::CommitRequest { payload, .. } => Some(payload.clone()),
                _ => None,
            })
            .unwrap();
        let body: serde_json::Value = serde_json::from_str(&payload).unwrap();
        let last = body["messages"].as_array().unwrap().last().unwrap().clone();
        assert!(last["content"].as_str().unwrap().ends_with("A: "));
    }

    #[test]
    fn role_scope_produces_assistant_prefix() {
        let env = env_with(MockBackend::new(0, Duration::ZERO), 2);
        let source = "@ppl\ndef main():\n    \"Q: who?\"\n    with AIRole():\n        f\"The name is {gen()}\"\n    return convo()\n";
        let program = compile(source).unwrap();
        let Value::Bundle(records) = run_program(&program, "main", vec![], &env).unwrap() else {
            panic!()
        };
        assert_eq!(records[0].role, Role::User);
        assert_eq!(records[1].role, Role::Assistant);
        let msgs = render_messages(&records);
        assert_eq!(msgs.len(), 2);
        assert!(msgs[1].content.materialize().unwrap().starts_with("The name is mock-"));
    }

    #[test]
    fn role_scope_must_be_outermost() {
        let env = env_with(MockBackend::new(0, Duration::ZERO), 2);
        let err = run(
            "@ppl\ndef main():\n    with NumberedList():\n        with AIRole():\n            \"x\"\n",
            &env,
        )
        .unwrap_err();
        assert!(err.to_string().contains("outermost"));
    }

    #[test]
    fn copy_mode_parallel_calls_are_isolated() {
        let env = env_with(MockBackend::new(0, Duration::ZERO), 4);
        let source = "\
@ppl(ctx=\"copy\")
def get_answer(q):
    q
    return gen()

@ppl
def main():
    \"intro\"
    answers = [get_answer(q) for q in [\"q1\", \"q2\"]]
    return [convo(), answers]
";
        let program = compile(source).unwrap();
        let Value::List(parts) = run_program(&program, "main", vec![], &env).unwrap() else {
            panic!()
        };
        let Value::Bundle(records) = &parts[0] else { panic!() };
        assert_eq!(render_text(records).unwrap(), "intro");
        let Value::List(answers) = &parts[1] else { panic!() };
        assert_eq!(answers.len(), 2);
        let sends = env
            .trace
            .events()
            .iter()
            .filter(|e| matches!(e, TraceEvent::SendRequest { .. }))
            .count();
        assert_eq!(sends, 2);
    }

    #[test]
    fn same_mode_mutations_visible_to_caller() {
        let env = env_with(MockBackend::new(0, Duration::ZERO), 2);
        let out = run_text(
            "\
@ppl(ctx=\"same\")
def addon():
    \"added line\"

@ppl
def main():
    \"first\"
    addon()
    return convo()
",
            &env,
        );
        assert_eq!(out, "first\nadded line");
    }

    #[test]
    fn resume_mode_accumulates_across_calls() {
        let env = env_with(MockBackend::new(0, Duration::ZERO), 2);
        let out = run_text(
            "\
@ppl(ctx=\"resume\")
def chat(line):
    line
    return convo()

@ppl
def main():
    \"greeting\"
    chat(\"turn 1\")
    x = chat(\"turn 2\")
    return x
",
            &env,
        );
        assert_eq!(out, "greeting\nturn 1\nturn 2");
    }

    #[test]
    fn control_flow_over_boolean_future() {
        let script = MockBackend::load_script(
            r#"[{"pattern": "lucky", "text": "yes"}]"#,
        )
        .unwrap();
        let env = env_with(MockBackend::new(0, Duration::ZERO).with_script(script), 2);
        let out = run_text(
            "\
@ppl
def main():
    \"Is 7 lucky? Answer yes or no.\"
    answer = gen()
    if answer == \"yes\":
        return \"was lucky\"
    return \"not lucky\"
",
            &env,
        );
        assert_eq!(out, "was lucky");
    }

    #[test]
    fn tool_call_round_trip() {
        let script = MockBackend::load_script(
            r#"[{"pattern": "lucky number", "tool_calls": [{"name": "is_lucky", "arguments": {"x": 2024}}]}]"#,
        )
        .unwrap();
        let env = env_with(MockBackend::new(0, Duration::ZERO).with_script(script), 2);
        let out = run_text(
            "\
@ppl
def main():
    \"Is 2024 a lucky number?\"
    result = gen(tools=[is_lucky], tool_choice=\"required\")
    msgs = result.run_tool_calls()
    return msgs
",
            &env,
        );
        // 2024 + 3 = 2027, prime.
        assert_eq!(out, "true");
    }

    #[test]
    fn unknown_tool_call_errors() {
        let script = MockBackend::load_script(
            r#"[{"pattern": ".", "tool_calls": [{"name": "nope", "arguments": {}}]}]"#,
        )
        .unwrap();
        let env = env_with(MockBackend::new(0, Duration::ZERO).with_script(script), 2);
        let err = run(
            "\
@ppl
def main():
    \"q\"
    result = gen(tools=[is_lucky], tool_choice=\"auto\")
    return run_tool_calls(result)
",
            &env,
        )
        .unwrap_err();
        assert!(matches!(err, RuntimeError::UnknownTool(name) if name == "nope"));
    }

    #[test]
    fn captured_tool_message_gets_tool_role() {
        let script = MockBackend::load_script(
            r#"[{"pattern": "lucky", "tool_calls": [{"name": "is_lucky", "arguments": {"x": 1}}]}]"#,
        )
        .unwrap();
        let env = env_with(MockBackend::new(0, Duration::ZERO).with_script(script), 2);
        let source = "\
@ppl
def main():
    \"lucky?\"
    (msgs := run_tool_calls(gen(tools=[is_lucky], tool_choice=\"required\")))
    return convo()
";
        let program = compile(source).unwrap();
        let Value::Bundle(records) = run_program(&program, "main", vec![], &env).unwrap() else {
            panic!()
        };
        assert_eq!(records.last().unwrap().role, Role::Tool);
    }

    #[test]
    fn entry_not_found_lists_functions() {
        let env = env_with(MockBackend::new(0, Duration::ZERO), 2);
        let program = compile("@ppl\ndef helper():\n    x = 1\n").unwrap();
        let err = run_program(&program, "main", vec![], &env).unwrap_err();
        assert!(err.to_string().contains("helper"));
    }

    #[test]
    fn calling_ppl_from_plain_function_errors() {
        let env = env_with(MockBackend::new(0, Duration::ZERO), 2);
        let err = run(
            "\
@ppl
def inner():
    \"x\"

def main():
    return inner()
",
            &env,
        )
        .unwrap_err();
        assert!(err.to_string().contains("without a prompt context"));
    }

    #[test]
    fn request_count_matches_gen_evaluations() {
        let env = env_with(MockBackend::new(0, Duration::ZERO), 4);
        run_text(
            "\
@ppl
def main():
    \"q\"
    xs = [gen() for i in range(3)]
    return str(len(xs))
",
            &env,
        );
        let sends = env
            .trace
            .events()
            .iter()
            .filter(|e| matches!(e, TraceEvent::SendRequest { .. }))
            .count();
        assert_eq!(sends, 3);
    }

    #[test]
    fn numbered_list_with_definitions() {
        let env = env_with(MockBackend::new(0, Duration::ZERO), 2);
        let out = run_text(
            "\
@ppl
def main():
    input_req = define(\"Input Requirement\")
    \"Here are the requirements:\"
    with NumberedList(indent=2):
        instantiate(input_req, \"Input should be a string\")
        instantiate(define(\"Output Requirement\"), \"Output should be a list\")
    return records()
",
            &env,
        );
        assert_eq!(
            out,
            "Here are the requirements:\n  1. Input Requirement: Input should be a string\n  2. Output Requirement: Output should be a list"
        );
    }

    #[test]
    fn arity_mismatch_reports_counts() {
        let env = env_with(MockBackend::new(0, Duration::ZERO), 2);
        let err = run(
            "def two(a, b):\n    return a\n@ppl\ndef main():\n    x = two(1)\n",
            &env,
        )
        .unwrap_err();
        assert!(err.to_string().contains("expects 2 argument(s), got 1"));
    }

    #[test]
    fn deterministic_across_runs() {
        let source = "\
@ppl
def main():
    \"fixed prompt\"
    (x := gen())
    return convo()
";
        let run_once = || {
            let env = env_with(MockBackend::new(7, Duration::ZERO), 4);
            (run_text(source, &env), env.trace.events().len())
        };
        let (a, an) = run_once();
        let (b, bn) = run_once();
        assert_eq!(a, b);
        assert_eq!(an, bn);
    }

    #[test]
    fn top_level_assignments_are_global() {
        let env = env_with(MockBackend::new(0, Duration::ZERO), 2);
        let out = run_text(
            "n = 2\n@ppl\ndef main():\n    xs = [str(i) for i in range(n)]\n    return xs\n",
            &env,
        );
        // list promptified with the default delimiter
        assert_eq!(out, "0\n1");
    }
}
