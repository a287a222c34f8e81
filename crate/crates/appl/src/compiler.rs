//! AST-to-IR compilation: split standalone f-strings into sequential part
//! captures, mark expression statements in `ppl` functions as prompt
//! captures, and thread the hidden context slot through context-needing
//! calls.

use indexmap::IndexMap;

use crate::error::{CompileError, FrontendError};
use crate::frontend::ast::{
    BinOpKind, CmpOpKind, CtxMode, Expr, FStringField, FsPart, FunctionDef, Module, NumLit, Span,
    Stmt,
};
use crate::frontend::parse_source;

/// Builtins that read or mutate the prompt context.
pub const CONTEXT_BUILTINS: &[&str] = &["gen", "records", "convo"];

/// Scope constructors legal as `with` subjects.
pub const COMPOSITOR_BUILTINS: &[&str] = &["NumberedList", "DashedList", "Tagged", "Str"];
pub const ROLE_BUILTINS: &[&str] = &["AIRole", "SystemRole", "UserRole", "ToolRole"];

#[derive(Debug, Clone, PartialEq)]
pub struct IrProgram {
    pub functions: IndexMap<String, IrFunction>,
    pub top_level: Vec<IrStmt>,
    pub entry: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrFunction {
    pub name: String,
    pub params: Vec<String>,
    /// `None` iff the function lacked the `ppl` decorator.
    pub ctx_mode: Option<CtxMode>,
    pub body: Vec<IrStmt>,
    pub needs_ctx: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IrStmt {
    /// Expression statement captured into the owning context.
    Capture { expr: IrExpr, span: Span },
    /// Expression statement evaluated for effect only.
    Eval { expr: IrExpr, span: Span },
    Assign {
        target: String,
        expr: IrExpr,
        span: Span,
    },
    Return { expr: Option<IrExpr>, span: Span },
    With {
        scope: IrExpr,
        body: Vec<IrStmt>,
        span: Span,
    },
    For {
        var: String,
        iter: IrExpr,
        body: Vec<IrStmt>,
        span: Span,
    },
    If {
        branches: Vec<(IrExpr, Vec<IrStmt>)>,
        else_body: Option<Vec<IrStmt>>,
        span: Span,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum IrFsPart {
    Lit(String),
    Field {
        expr: IrExpr,
        format_spec: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum IrExpr {
    Str(String, Span),
    Num(NumLit, Span),
    Bool(bool, Span),
    NoneLit(Span),
    Name(String, Span),
    FString(Vec<IrFsPart>, Span),
    NamedCapture {
        name: String,
        expr: Box<IrExpr>,
        span: Span,
    },
    Call {
        callee: Box<IrExpr>,
        args: Vec<IrExpr>,
        kwargs: Vec<(String, IrExpr)>,
        /// The hidden context slot: true when the callee needs the caller's
        /// prompt context (ppl functions and context builtins).
        with_ctx: bool,
        span: Span,
    },
    BinOp {
        op: BinOpKind,
        lhs: Box<IrExpr>,
        rhs: Box<IrExpr>,
        span: Span,
    },
    Compare {
        op: CmpOpKind,
        lhs: Box<IrExpr>,
        rhs: Box<IrExpr>,
        span: Span,
    },
    List(Vec<IrExpr>, Span),
    ListComp {
        elt: Box<IrExpr>,
        var: String,
        iter: Box<IrExpr>,
        span: Span,
    },
    Attribute {
        obj: Box<IrExpr>,
        attr: String,
        span: Span,
    },
}

impl IrExpr {
    pub fn span(&self) -> Span {
        match self {
            IrExpr::Str(_, s)
            | IrExpr::Num(_, s)
            | IrExpr::Bool(_, s)
            | IrExpr::NoneLit(s)
            | IrExpr::Name(_, s)
            | IrExpr::FString(_, s)
            | IrExpr::List(_, s) => *s,
            IrExpr::NamedCapture { span, .. }
            | IrExpr::Call { span, .. }
            | IrExpr::BinOp { span, .. }
            | IrExpr::Compare { span, .. }
            | IrExpr::ListComp { span, .. }
            | IrExpr::Attribute { span, .. } => *span,
        }
    }
}

/// Replace every standalone f-string statement by an ordered group of
/// single-part statements under a part-joining `Str()` scope, so that the
/// captured text equals the unsplit rendering while each field becomes its
/// own capture. F-strings in non-statement position are untouched.
pub fn split_fstrings(module: &Module) -> Module {
    Module {
        body: module
            .body
            .iter()
            .map(|stmt| split_stmt(stmt, false))
            .collect(),
    }
}

fn split_stmt(stmt: &Stmt, in_ppl: bool) -> Stmt {
    let split_body = |body: &[Stmt], in_ppl: bool| -> Vec<Stmt> {
        body.iter().map(|s| split_stmt(s, in_ppl)).collect()
    };
    match stmt {
        Stmt::Expr {
            expr: Expr::FString(parts, fspan),
            captured,
            span,
        } => {
            let stmts: Vec<Stmt> = parts
                .iter()
                .map(|part| Stmt::Expr {
                    expr: match part {
                        FsPart::Lit(text) => Expr::Str(text.clone(), *fspan),
                        FsPart::Field(field) => {
                            Expr::FString(vec![FsPart::Field(field.clone())], field.expr.span())
                        }
                    },
                    captured: *captured,
                    span: *span,
                })
                .collect();
            if !in_ppl || stmts.len() == 1 {
                // Outside ppl functions the parts evaluate for effect only;
                // a single part needs no joining scope either way.
                return match stmts.into_iter().next() {
                    Some(stmt) => stmt,
                    None => Stmt::Expr {
                        expr: Expr::Str(String::new(), *fspan),
                        captured: *captured,
                        span: *span,
                    },
                };
            }
            Stmt::With {
                scope: Expr::Call {
                    callee: Box::new(Expr::Name("Str".into(), *span)),
                    args: vec![],
                    kwargs: vec![],
                    span: *span,
                },
                body: stmts,
                span: *span,
            }
        }
        Stmt::With { scope, body, span } => Stmt::With {
            scope: scope.clone(),
            body: split_body(body, in_ppl),
            span: *span,
        },
        Stmt::For {
            var,
            iter,
            body,
            span,
        } => Stmt::For {
            var: var.clone(),
            iter: iter.clone(),
            body: split_body(body, in_ppl),
            span: *span,
        },
        Stmt::If {
            branches,
            else_body,
            span,
        } => Stmt::If {
            branches: branches
                .iter()
                .map(|(cond, body)| (cond.clone(), split_body(body, in_ppl)))
                .collect(),
            else_body: else_body.as_ref().map(|b| split_body(b, in_ppl)),
            span: *span,
        },
        Stmt::FunctionDef(f) => Stmt::FunctionDef(FunctionDef {
            body: split_body(&f.body, f.is_ppl()),
            ..f.clone()
        }),
        other => other.clone(),
    }
}

/// Mark every expression statement inside a `ppl` function body as a prompt
/// capture; expression statements elsewhere stay effect-only.
pub fn wrap_expression_statements(module: &Module) -> Module {
    Module {
        body: module
            .body
            .iter()
            .map(|stmt| wrap_stmt(stmt, false))
            .collect(),
    }
}

fn wrap_stmt(stmt: &Stmt, in_ppl: bool) -> Stmt {
    let wrap_body = |body: &[Stmt], in_ppl: bool| -> Vec<Stmt> {
        body.iter().map(|s| wrap_stmt(s, in_ppl)).collect()
    };
    match stmt {
        Stmt::Expr { expr, span, .. } => Stmt::Expr {
            expr: expr.clone(),
            captured: in_ppl,
            span: *span,
        },
        Stmt::With { scope, body, span } => Stmt::With {
            scope: scope.clone(),
            body: wrap_body(body, in_ppl),
            span: *span,
        },
        Stmt::For {
            var,
            iter,
            body,
            span,
        } => Stmt::For {
            var: var.clone(),
            iter: iter.clone(),
            body: wrap_body(body, in_ppl),
            span: *span,
        },
        Stmt::If {
            branches,
            else_body,
            span,
        } => Stmt::If {
            branches: branches
                .iter()
                .map(|(cond, body)| (cond.clone(), wrap_body(body, in_ppl)))
                .collect(),
            else_body: else_body.as_ref().map(|b| wrap_body(b, in_ppl)),
            span: *span,
        },
        Stmt::FunctionDef(f) => Stmt::FunctionDef(FunctionDef {
            body: wrap_body(&f.body, f.is_ppl()),
            ..f.clone()
        }),
        other => other.clone(),
    }
}

struct Injector {
    /// Names of functions that take the hidden context parameter.
    ppl_functions: std::collections::HashSet<String>,
}

impl Injector {
    fn needs_ctx_callee(&self, callee: &Expr) -> bool {
        match callee {
            Expr::Name(name, _) => {
                CONTEXT_BUILTINS.contains(&name.as_str())
                    || COMPOSITOR_BUILTINS.contains(&name.as_str())
                    || ROLE_BUILTINS.contains(&name.as_str())
                    || self.ppl_functions.contains(name)
            }
            _ => false,
        }
    }

    fn stmt(&self, stmt: &Stmt, in_ppl: bool) -> Result<IrStmt, CompileError> {
        let body = |body: &[Stmt]| -> Result<Vec<IrStmt>, CompileError> {
            body.iter().map(|s| self.stmt(s, in_ppl)).collect()
        };
        Ok(match stmt {
            Stmt::Expr {
                expr,
                captured,
                span,
            } => {
                let expr = self.expr(expr, in_ppl)?;
                if *captured {
                    IrStmt::Capture { expr, span: *span }
                } else {
                    IrStmt::Eval { expr, span: *span }
                }
            }
            Stmt::Assign { target, expr, span } => IrStmt::Assign {
                target: target.clone(),
                expr: self.expr(expr, in_ppl)?,
                span: *span,
            },
            Stmt::Return { expr, span } => IrStmt::Return {
                expr: expr.as_ref().map(|e| self.expr(e, in_ppl)).transpose()?,
                span: *span,
            },
            Stmt::With { scope, body: b, span } => {
                if !in_ppl {
                    return Err(CompileError::new(
                        "'with' scopes require a prompt context; \
                         move this into a @ppl function",
                        *span,
                    ));
                }
                IrStmt::With {
                    scope: self.expr(scope, in_ppl)?,
                    body: body(b)?,
                    span: *span,
                }
            }
            Stmt::For {
                var,
                iter,
                body: b,
                span,
            } => IrStmt::For {
                var: var.clone(),
                iter: self.expr(iter, in_ppl)?,
                body: body(b)?,
                span: *span,
            },
            Stmt::If {
                branches,
                else_body,
                span,
            } => IrStmt::If {
                branches: branches
                    .iter()
                    .map(|(cond, b)| Ok((self.expr(cond, in_ppl)?, body(b)?)))
                    .collect::<Result<_, CompileError>>()?,
                else_body: else_body.as_ref().map(|b| body(b)).transpose()?,
                span: *span,
            },
            Stmt::FunctionDef(f) => {
                return Err(CompileError::new(
                    format!("function '{}' may only be defined at top level", f.name),
                    f.span,
                ))
            }
        })
    }

    fn expr(&self, expr: &Expr, in_ppl: bool) -> Result<IrExpr, CompileError> {
        Ok(match expr {
            Expr::Str(s, span) => IrExpr::Str(s.clone(), *span),
            Expr::Num(n, span) => IrExpr::Num(n.clone(), *span),
            Expr::Bool(b, span) => IrExpr::Bool(*b, *span),
            Expr::NoneLit(span) => IrExpr::NoneLit(*span),
            Expr::Name(n, span) => IrExpr::Name(n.clone(), *span),
            Expr::FString(parts, span) => IrExpr::FString(
                parts
                    .iter()
                    .map(|p| {
                        Ok(match p {
                            FsPart::Lit(s) => IrFsPart::Lit(s.clone()),
                            FsPart::Field(FStringField { expr, format_spec }) => IrFsPart::Field {
                                expr: self.expr(expr, in_ppl)?,
                                format_spec: format_spec.clone(),
                            },
                        })
                    })
                    .collect::<Result<_, CompileError>>()?,
                *span,
            ),
            Expr::NamedCapture { name, expr, span } => IrExpr::NamedCapture {
                name: name.clone(),
                expr: Box::new(self.expr(expr, in_ppl)?),
                span: *span,
            },
            Expr::Call {
                callee,
                args,
                kwargs,
                span,
            } => {
                let with_ctx = self.needs_ctx_callee(callee);
                if with_ctx && !in_ppl {
                    if let Expr::Name(name, _) = callee.as_ref() {
                        if CONTEXT_BUILTINS.contains(&name.as_str()) {
                            return Err(CompileError::new(
                                format!(
                                    "'{name}' requires a prompt context and may only be \
                                     used inside a @ppl function"
                                ),
                                *span,
                            ));
                        }
                    }
                }
                IrExpr::Call {
                    callee: Box::new(self.expr(callee, in_ppl)?),
                    args: args
                        .iter()
                        .map(|a| self.expr(a, in_ppl))
                        .collect::<Result<_, _>>()?,
                    kwargs: kwargs
                        .iter()
                        .map(|(k, v)| Ok((k.clone(), self.expr(v, in_ppl)?)))
                        .collect::<Result<_, CompileError>>()?,
                    with_ctx,
                    span: *span,
                }
            }
            Expr::BinOp { op, lhs, rhs, span } => IrExpr::BinOp {
                op: *op,
                lhs: Box::new(self.expr(lhs, in_ppl)?),
                rhs: Box::new(self.expr(rhs, in_ppl)?),
                span: *span,
            },
            Expr::Compare { op, lhs, rhs, span } => IrExpr::Compare {
                op: *op,
                lhs: Box::new(self.expr(lhs, in_ppl)?),
                rhs: Box::new(self.expr(rhs, in_ppl)?),
                span: *span,
            },
            Expr::List(items, span) => IrExpr::List(
                items
                    .iter()
                    .map(|i| self.expr(i, in_ppl))
                    .collect::<Result<_, _>>()?,
                *span,
            ),
            Expr::ListComp {
                elt,
                var,
                iter,
                span,
            } => IrExpr::ListComp {
                elt: Box::new(self.expr(elt, in_ppl)?),
                var: var.clone(),
                iter: Box::new(self.expr(iter, in_ppl)?),
                span: *span,
            },
            Expr::Attribute { obj, attr, span } => IrExpr::Attribute {
                obj: Box::new(self.expr(obj, in_ppl)?),
                attr: attr.clone(),
                span: *span,
            },
        })
    }
}

/// Lower the transformed AST to IR, giving every `ppl` function its hidden
/// context parameter and flagging context-carrying call sites.
pub fn inject_context(module: &Module) -> Result<IrProgram, CompileError> {
    let mut ppl_functions = std::collections::HashSet::new();
    for stmt in &module.body {
        if let Stmt::FunctionDef(f) = stmt {
            if f.is_ppl() {
                ppl_functions.insert(f.name.clone());
            }
        }
    }
    let injector = Injector { ppl_functions };

    let mut functions = IndexMap::new();
    let mut top_level = Vec::new();
    for stmt in &module.body {
        match stmt {
            Stmt::FunctionDef(f) => {
                let is_ppl = f.is_ppl();
                let body = f
                    .body
                    .iter()
                    .map(|s| injector.stmt(s, is_ppl))
                    .collect::<Result<_, _>>()?;
                functions.insert(
                    f.name.clone(),
                    IrFunction {
                        name: f.name.clone(),
                        params: f.params.clone(),
                        ctx_mode: f.decorator.as_ref().map(|d| d.ctx_mode),
                        body,
                        needs_ctx: is_ppl,
                    },
                );
            }
            other => top_level.push(injector.stmt(other, false)?),
        }
    }
    let entry = if functions.contains_key("main") {
        Some("main".to_string())
    } else {
        None
    };
    let program = IrProgram {
        functions,
        top_level,
        entry,
    };
    verify(&program)?;
    Ok(program)
}

/// Compile-time verifier: no instruction may reference a context slot its
/// enclosing function does not have.
pub fn verify(program: &IrProgram) -> Result<(), CompileError> {
    for function in program.functions.values() {
        verify_body(&function.body, function.needs_ctx)?;
    }
    verify_body(&program.top_level, false)
}

fn verify_body(body: &[IrStmt], has_ctx: bool) -> Result<(), CompileError> {
    for stmt in body {
        match stmt {
            IrStmt::Capture { expr, span } => {
                if !has_ctx {
                    return Err(CompileError::new(
                        "capture instruction outside a context-owning function",
                        *span,
                    ));
                }
                verify_expr(expr, has_ctx)?;
            }
            IrStmt::Eval { expr, .. } => verify_expr(expr, has_ctx)?,
            IrStmt::Assign { expr, .. } => verify_expr(expr, has_ctx)?,
            IrStmt::Return { expr, .. } => {
                if let Some(expr) = expr {
                    verify_expr(expr, has_ctx)?;
                }
            }
            IrStmt::With { scope, body, span } => {
                if !has_ctx {
                    return Err(CompileError::new(
                        "scope instruction outside a context-owning function",
                        *span,
                    ));
                }
                verify_expr(scope, has_ctx)?;
                verify_body(body, has_ctx)?;
            }
            IrStmt::For { iter, body, .. } => {
                verify_expr(iter, has_ctx)?;
                verify_body(body, has_ctx)?;
            }
            IrStmt::If {
                branches,
                else_body,
                ..
            } => {
                for (cond, body) in branches {
                    verify_expr(cond, has_ctx)?;
                    verify_body(body, has_ctx)?;
                }
                if let Some(body) = else_body {
                    verify_body(body, has_ctx)?;
                }
            }
        }
    }
    Ok(())
}

fn verify_expr(expr: &IrExpr, has_ctx: bool) -> Result<(), CompileError> {
    match expr {
        IrExpr::Str(..)
        | IrExpr::Num(..)
        | IrExpr::Bool(..)
        | IrExpr::NoneLit(..)
        | IrExpr::Name(..) => Ok(()),
        IrExpr::FString(parts, _) => {
            for part in parts {
                if let IrFsPart::Field { expr, .. } = part {
                    verify_expr(expr, has_ctx)?;
                }
            }
            Ok(())
        }
        IrExpr::NamedCapture { expr, .. } => verify_expr(expr, has_ctx),
        IrExpr::Call {
            callee,
            args,
            kwargs,
            with_ctx,
            span,
        } => {
            if *with_ctx && !has_ctx {
                // Reachable only for direct ppl-function calls from ctx-less
                // code, which the interpreter rejects with a clearer message;
                // builtins were already rejected during injection.
                if let IrExpr::Name(name, _) = callee.as_ref() {
                    if CONTEXT_BUILTINS.contains(&name.as_str())
                        || COMPOSITOR_BUILTINS.contains(&name.as_str())
                        || ROLE_BUILTINS.contains(&name.as_str())
                    {
                        return Err(CompileError::new(
                            format!("'{name}' used without a context slot"),
                            *span,
                        ));
                    }
                }
            }
            verify_expr(callee, has_ctx)?;
            for arg in args {
                verify_expr(arg, has_ctx)?;
            }
            for (_, value) in kwargs {
                verify_expr(value, has_ctx)?;
            }
            Ok(())
        }
        IrExpr::BinOp { lhs, rhs, .. } | IrExpr::Compare { lhs, rhs, .. } => {
            verify_expr(lhs, has_ctx)?;
            verify_expr(rhs, has_ctx)
        }
        IrExpr::List(items, _) => {
            for item in items {
                verify_expr(item, has_ctx)?;
            }
            Ok(())
        }
        IrExpr::ListComp { elt, iter, .. } => {
            verify_expr(elt, has_ctx)?;
            verify_expr(iter, has_ctx)
        }
        IrExpr::Attribute { obj, .. } => verify_expr(obj, has_ctx),
    }
}

/// Full pipeline: tokenize, parse, split f-strings, mark captures, inject
/// contexts. Deterministic.
pub fn compile(source: &str) -> Result<IrProgram, FrontendError> {
    let module = parse_source(source)?;
    let module = split_fstrings(&module);
    let module = wrap_expression_statements(&module);
    Ok(inject_context(&module).map_err(FrontendError::Compile)?)
}

/// Human-readable IR dump for `--emit-ir`. Not a stability surface.
pub fn dump_ir(program: &IrProgram) -> String {
    let mut out = String::new();
    for function in program.functions.values() {
        let mode = match function.ctx_mode {
            Some(mode) => format!(" ctx={}", mode.as_str()),
            None => String::new(),
        };
        out.push_str(&format!(
            "fn {}({}){mode}\n",
            function.name,
            function.params.join(", ")
        ));
        dump_body(&function.body, 1, &mut out);
    }
    if !program.top_level.is_empty() {
        out.push_str("top-level:\n");
        dump_body(&program.top_level, 1, &mut out);
    }
    out
}

fn dump_body(body: &[IrStmt], depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    for stmt in body {
        match stmt {
            IrStmt::Capture { expr, .. } => {
                out.push_str(&format!("{pad}capture {}\n", dump_expr(expr)))
            }
            IrStmt::Eval { expr, .. } => out.push_str(&format!("{pad}eval {}\n", dump_expr(expr))),
            IrStmt::Assign { target, expr, .. } => {
                out.push_str(&format!("{pad}{target} = {}\n", dump_expr(expr)))
            }
            IrStmt::Return { expr, .. } => match expr {
                Some(expr) => out.push_str(&format!("{pad}return {}\n", dump_expr(expr))),
                None => out.push_str(&format!("{pad}return\n")),
            },
            IrStmt::With { scope, body, .. } => {
                out.push_str(&format!("{pad}with {}\n", dump_expr(scope)));
                dump_body(body, depth + 1, out);
            }
            IrStmt::For {
                var, iter, body, ..
            } => {
                out.push_str(&format!("{pad}for {var} in {}\n", dump_expr(iter)));
                dump_body(body, depth + 1, out);
            }
            IrStmt::If {
                branches,
                else_body,
                ..
            } => {
                for (i, (cond, body)) in branches.iter().enumerate() {
                    let kw = if i == 0 { "if" } else { "elif" };
                    out.push_str(&format!("{pad}{kw} {}\n", dump_expr(cond)));
                    dump_body(body, depth + 1, out);
                }
                if let Some(body) = else_body {
                    out.push_str(&format!("{pad}else\n"));
                    dump_body(body, depth + 1, out);
                }
            }
        }
    }
}

fn dump_expr(expr: &IrExpr) -> String {
    match expr {
        IrExpr::Str(s, _) => format!("{s:?}"),
        IrExpr::Num(NumLit::Int(i), _) => i.to_string(),
        IrExpr::Num(NumLit::Float(f), _) => f.to_string(),
        IrExpr::Bool(b, _) => b.to_string(),
        IrExpr::NoneLit(_) => "None".into(),
        IrExpr::Name(n, _) => n.clone(),
        IrExpr::FString(parts, _) => {
            let inner: Vec<String> = parts
                .iter()
                .map(|p| match p {
                    IrFsPart::Lit(s) => format!("{s:?}"),
                    IrFsPart::Field { expr, format_spec } => match format_spec {
                        Some(spec) => format!("{{{}:{spec}}}", dump_expr(expr)),
                        None => format!("{{{}}}", dump_expr(expr)),
                    },
                })
                .collect();
            format!("fstr({})", inner.join(", "))
        }
        IrExpr::NamedCapture { name, expr, .. } => format!("({name} := {})", dump_expr(expr)),
        IrExpr::Call {
            callee,
            args,
            kwargs,
            with_ctx,
            ..
        } => {
            let mut parts: Vec<String> = args.iter().map(dump_expr).collect();
            parts.extend(kwargs.iter().map(|(k, v)| format!("{k}={}", dump_expr(v))));
            if *with_ctx {
                parts.push("<ctx>".into());
            }
            format!("{}({})", dump_expr(callee), parts.join(", "))
        }
        IrExpr::BinOp { op, lhs, rhs, .. } => {
            format!("({} {} {})", dump_expr(lhs), op.as_str(), dump_expr(rhs))
        }
        IrExpr::Compare { op, lhs, rhs, .. } => {
            format!("({} {} {})", dump_expr(lhs), op.as_str(), dump_expr(rhs))
        }
        IrExpr::List(items, _) => {
            let inner: Vec<String> = items.iter().map(dump_expr).collect();
            format!("[{}]", inner.join(", "))
        }
        IrExpr::ListComp { elt, var, iter, .. } => {
            format!("[{} for {var} in {}]", dump_expr(elt), dump_expr(iter))
        }
        IrExpr::Attribute { obj, attr, .. } => format!("{}.{attr}", dump_expr(obj)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::normalize_spans;
    use crate::frontend::printer::pretty_print;

    fn get_fn<'a>(p: &'a IrProgram, name: &str) -> &'a IrFunction {
        p.functions.get(name).unwrap()
    }

    #[test]
    fn standalone_fstring_splits_into_joined_parts() {
        let program = compile(
            "@ppl\ndef f():\n    f\"prefix{(foo := gen()):fmt}suffix\"\n",
        )
        .unwrap();
        let body = &get_fn(&program, "f").body;
        let IrStmt::With { scope, body, .. } = &body[0] else {
            panic!("expected Str() scope, got {body:?}");
        };
        let IrExpr::Call { callee, .. } = scope else {
            panic!()
        };
        assert!(matches!(callee.as_ref(), IrExpr::Name(n, _) if n == "Str"));
        assert_eq!(body.len(), 3);
        assert!(matches!(
            &body[0],
            IrStmt::Capture { expr: IrExpr::Str(s, _), .. } if s == "prefix"
        ));
        let IrStmt::Capture {
            expr: IrExpr::FString(parts, _),
            ..
        } = &body[1]
        else {
            panic!("middle part should stay a one-field f-string");
        };
        assert!(matches!(
            &parts[0],
            IrFsPart::Field { format_spec: Some(spec), .. } if spec == "fmt"
        ));
        assert!(matches!(
            &body[2],
            IrStmt::Capture { expr: IrExpr::Str(s, _), .. } if s == "suffix"
        ));
    }

    #[test]
    fn field_free_fstring_becomes_single_capture() {
        let program = compile("@ppl\ndef f():\n    f\"plain\"\n").unwrap();
        let body = &get_fn(&program, "f").body;
        assert!(matches!(
            &body[0],
            IrStmt::Capture { expr: IrExpr::Str(s, _), .. } if s == "plain"
        ));
    }

    #[test]
    fn assigned_fstring_untouched() {
        let program = compile("@ppl\ndef f():\n    x = f\"a{y}b\"\n").unwrap();
        let body = &get_fn(&program, "f").body;
        let IrStmt::Assign { expr, .. } = &body[0] else {
            panic!()
        };
        assert!(matches!(expr, IrExpr::FString(parts, _) if parts.len() == 3));
    }

    #[test]
    fn expression_statements_wrapped_only_in_ppl() {
        let program =
            compile("@ppl\ndef f(q):\n    q\ndef g(q):\n    q\n").unwrap();
        assert!(matches!(
            get_fn(&program, "f").body[0],
            IrStmt::Capture { .. }
        ));
        assert!(matches!(get_fn(&program, "g").body[0], IrStmt::Eval { .. }));
    }

    #[test]
    fn named_capture_statement_is_captured() {
        let program = compile("@ppl\ndef f():\n    (actions := gen())\n").unwrap();
        let IrStmt::Capture { expr, .. } = &get_fn(&program, "f").body[0] else {
            panic!()
        };
        assert!(matches!(expr, IrExpr::NamedCapture { .. }));
    }

    #[test]
    fn ctx_slot_flags() {
        let program = compile(
            "@ppl(ctx=\"copy\")\ndef get_answer(q):\n    q\n    return gen()\n\
             @ppl\ndef main():\n    x = get_answer(\"q1\")\n    y = len(\"ab\")\n",
        )
        .unwrap();
        let f = get_fn(&program, "get_answer");
        assert_eq!(f.ctx_mode, Some(CtxMode::Copy));
        assert!(f.needs_ctx);
        let main = get_fn(&program, "main");
        let IrStmt::Assign { expr, .. } = &main.body[0] else {
            panic!()
        };
        assert!(matches!(expr, IrExpr::Call { with_ctx: true, .. }));
        let IrStmt::Assign { expr, .. } = &main.body[1] else {
            panic!()
        };
        assert!(matches!(expr, IrExpr::Call { with_ctx: false, .. }));
    }

    #[test]
    fn non_ppl_function_without_context_calls() {
        let program = compile("def helper(a, b):\n    return a + b\n").unwrap();
        let helper = get_fn(&program, "helper");
        assert!(!helper.needs_ctx);
        assert_eq!(helper.ctx_mode, None);
    }

    #[test]
    fn gen_outside_ppl_is_a_compile_error() {
        for source in ["gen()\n", "def f():\n    records()\n", "x = convo()\n"] {
            let err = compile(source).unwrap_err();
            assert!(
                err.to_string().contains("@ppl"),
                "{source:?} gave {err}"
            );
        }
    }

    #[test]
    fn with_scope_outside_ppl_is_a_compile_error() {
        let err = compile("def f():\n    with Tagged(\"t\"):\n        x = 1\n").unwrap_err();
        assert!(err.to_string().contains("'with' scopes"));
    }

    #[test]
    fn empty_file_compiles_to_empty_program() {
        let program = compile("").unwrap();
        assert!(program.functions.is_empty());
        assert!(program.top_level.is_empty());
        assert_eq!(program.entry, None);
    }

    #[test]
    fn compile_is_deterministic() {
        let source = "@ppl\ndef main():\n    f\"A: {gen()}\"\n    return convo()\n";
        assert_eq!(compile(source).unwrap(), compile(source).unwrap());
    }

    #[test]
    fn entry_detected_when_main_present() {
        let program = compile("@ppl\ndef main():\n    x = 1\n").unwrap();
        assert_eq!(program.entry.as_deref(), Some("main"));
    }

    #[test]
    fn split_preserves_rendering_for_genfree_fstrings() {
        // For f-strings without generation calls, splitting must not change
        // the final text: the parts joined with an empty delimiter equal the
        // unsplit rendering. Randomized literal/field mixes.
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            seed
        };
        for _ in 0..200 {
            let n_parts = 1 + (next() % 5) as usize;
            let mut src_fstring = String::from("f\"");
            let mut expected = String::new();
            for i in 0..n_parts {
                if next() % 2 == 0 {
                    let lit = format!("lit{i} ");
                    src_fstring.push_str(&lit);
                    expected.push_str(&lit);
                } else {
                    let value = next() % 100;
                    src_fstring.push_str(&format!("{{{value}}}"));
                    expected.push_str(&value.to_string());
                }
            }
            src_fstring.push('"');
            let source = format!("@ppl\ndef f():\n    {src_fstring}\n");
            let program = compile(&source).unwrap();
            let body = &get_fn(&program, "f").body;
            let rendered = render_static(body);
            assert_eq!(rendered, expected, "source: {source}");
        }
    }

    // Join all static captures of a body; supports only the literal shapes
    // the property test generates.
    fn render_static(body: &[IrStmt]) -> String {
        let mut out = String::new();
        for stmt in body {
            match stmt {
                IrStmt::Capture { expr, .. } => out.push_str(&static_text(expr)),
                IrStmt::With { body, .. } => out.push_str(&render_static(body)),
                other => panic!("unexpected stmt {other:?}"),
            }
        }
        out
    }

    fn static_text(expr: &IrExpr) -> String {
        match expr {
            IrExpr::Str(s, _) => s.clone(),
            IrExpr::Num(NumLit::Int(i), _) => i.to_string(),
            IrExpr::FString(parts, _) => parts
                .iter()
                .map(|p| match p {
                    IrFsPart::Lit(s) => s.clone(),
                    IrFsPart::Field { expr, .. } => static_text(expr),
                })
                .collect(),
            other => panic!("unexpected expr {other:?}"),
        }
    }

    #[test]
    fn wrap_and_split_commute_on_field_free_programs() {
        let source = "@ppl\ndef f():\n    f\"plain text\"\n    \"another\"\n";
        let module = crate::frontend::parse_source(source).unwrap();
        let a = wrap_expression_statements(&split_fstrings(&module));
        let b = split_fstrings(&wrap_expression_statements(&module));
        assert_eq!(normalize_spans(&a), normalize_spans(&b));
        // And both round-trip through the printer identically.
        assert_eq!(pretty_print(&a), pretty_print(&b));
    }
}
