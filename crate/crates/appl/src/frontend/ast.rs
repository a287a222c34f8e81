//! Abstract syntax tree for APPL-script.
//!
//! The node inventory is deliberately small: function definitions with an
//! optional `ppl` decorator, simple statements, and the expression forms the
//! bundled programs need. `ast_size` counts nodes over this inventory, one
//! per node, via the uniform [`NodeRef::children`] traversal.

use std::fmt;

/// Source position, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub line: u32,
    pub column: u32,
}

impl Span {
    pub fn new(line: u32, column: u32) -> Self {
        Span { line, column }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

/// Context-passing mode carried by the `ppl` decorator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CtxMode {
    /// Clean context (the default).
    #[default]
    New,
    /// Snapshot of the caller's conversation; mutations stay local.
    Copy,
    /// Alias of the caller's context; mutations are shared.
    Same,
    /// Persistent per-callee context; first call copies, later calls append.
    Resume,
}

impl CtxMode {
    pub fn parse(s: &str) -> Option<CtxMode> {
        match s {
            "new" => Some(CtxMode::New),
            "copy" => Some(CtxMode::Copy),
            "same" => Some(CtxMode::Same),
            "resume" => Some(CtxMode::Resume),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CtxMode::New => "new",
            CtxMode::Copy => "copy",
            CtxMode::Same => "same",
            CtxMode::Resume => "resume",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Module {
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decorator {
    pub ctx_mode: CtxMode,
    /// Whether `ctx=` was written explicitly (kept for the printer).
    pub explicit: bool,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<String>,
    pub decorator: Option<Decorator>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

impl FunctionDef {
    pub fn is_ppl(&self) -> bool {
        self.decorator.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    /// Standalone expression statement. Inside a `ppl` function the compiler
    /// marks it `captured`, turning evaluation into a prompt capture.
    Expr {
        expr: Expr,
        captured: bool,
        span: Span,
    },
    Assign {
        target: String,
        expr: Expr,
        span: Span,
    },
    Return {
        expr: Option<Expr>,
        span: Span,
    },
    With {
        scope: Expr,
        body: Vec<Stmt>,
        span: Span,
    },
    For {
        var: String,
        iter: Expr,
        body: Vec<Stmt>,
        span: Span,
    },
    If {
        branches: Vec<(Expr, Vec<Stmt>)>,
        else_body: Option<Vec<Stmt>>,
        span: Span,
    },
    FunctionDef(FunctionDef),
}

impl Stmt {
    pub fn span(&self) -> Span {
        match self {
            Stmt::Expr { span, .. }
            | Stmt::Assign { span, .. }
            | Stmt::Return { span, .. }
            | Stmt::With { span, .. }
            | Stmt::For { span, .. }
            | Stmt::If { span, .. } => *span,
            Stmt::FunctionDef(f) => f.span,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOpKind {
    Add,
    Sub,
    Mul,
}

impl BinOpKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BinOpKind::Add => "+",
            BinOpKind::Sub => "-",
            BinOpKind::Mul => "*",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOpKind {
    Eq,
    Ne,
    Lt,
    Gt,
}

impl CmpOpKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CmpOpKind::Eq => "==",
            CmpOpKind::Ne => "!=",
            CmpOpKind::Lt => "<",
            CmpOpKind::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NumLit {
    Int(i64),
    Float(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FStringField {
    pub expr: Expr,
    pub format_spec: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FsPart {
    Lit(String),
    Field(FStringField),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Str(String, Span),
    Num(NumLit, Span),
    Bool(bool, Span),
    NoneLit(Span),
    Name(String, Span),
    FString(Vec<FsPart>, Span),
    NamedCapture {
        name: String,
        expr: Box<Expr>,
        span: Span,
    },
    Call {
        callee: Box<Expr>,
        args: Vec<Expr>,
        kwargs: Vec<(String, Expr)>,
        span: Span,
    },
    BinOp {
        op: BinOpKind,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        span: Span,
    },
    Compare {
        op: CmpOpKind,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        span: Span,
    },
    List(Vec<Expr>, Span),
    ListComp {
        elt: Box<Expr>,
        var: String,
        iter: Box<Expr>,
        span: Span,
    },
    Attribute {
        obj: Box<Expr>,
        attr: String,
        span: Span,
    },
}

impl Expr {
    pub fn span(&self) -> Span {
        match self {
            Expr::Str(_, s)
            | Expr::Num(_, s)
            | Expr::Bool(_, s)
            | Expr::NoneLit(s)
            | Expr::Name(_, s)
            | Expr::FString(_, s)
            | Expr::List(_, s) => *s,
            Expr::NamedCapture { span, .. }
            | Expr::Call { span, .. }
            | Expr::BinOp { span, .. }
            | Expr::Compare { span, .. }
            | Expr::ListComp { span, .. }
            | Expr::Attribute { span, .. } => *span,
        }
    }
}

/// A uniform view over AST nodes, used for node counting.
///
/// Counted nodes: the module, every function definition, every decorator,
/// every statement, every expression, every f-string literal part, and every
/// f-string field.
#[derive(Debug, Clone, Copy)]
pub enum NodeRef<'a> {
    Module(&'a Module),
    Function(&'a FunctionDef),
    Decorator(&'a Decorator),
    Stmt(&'a Stmt),
    Expr(&'a Expr),
    FsLit(&'a str),
    FsField(&'a FStringField),
}

impl<'a> NodeRef<'a> {
    pub fn children(&self) -> Vec<NodeRef<'a>> {
        match self {
            NodeRef::Module(m) => m.body.iter().map(NodeRef::Stmt).collect(),
            NodeRef::Function(f) => {
                let mut out: Vec<NodeRef<'a>> = Vec::new();
                if let Some(d) = &f.decorator {
                    out.push(NodeRef::Decorator(d));
                }
                out.extend(f.body.iter().map(NodeRef::Stmt));
                out
            }
            NodeRef::Decorator(_) => Vec::new(),
            NodeRef::Stmt(s) => match s {
                Stmt::Expr { expr, .. } => vec![NodeRef::Expr(expr)],
                Stmt::Assign { expr, .. } => vec![NodeRef::Expr(expr)],
                Stmt::Return { expr, .. } => {
                    expr.iter().map(NodeRef::Expr).collect()
                }
                Stmt::With { scope, body, .. } => {
                    let mut out = vec![NodeRef::Expr(scope)];
                    out.extend(body.iter().map(NodeRef::Stmt));
                    out
                }
                Stmt::For { iter, body, .. } => {
                    let mut out = vec![NodeRef::Expr(iter)];
                    out.extend(body.iter().map(NodeRef::Stmt));
                    out
                }
                Stmt::If {
                    branches,
                    else_body,
                    ..
                } => {
                    let mut out = Vec::new();
                    for (cond, body) in branches {
                        out.push(NodeRef::Expr(cond));
                        out.extend(body.iter().map(NodeRef::Stmt));
                    }
                    if let Some(body) = else_body {
                        out.extend(body.iter().map(NodeRef::Stmt));
                    }
                    out
                }
                // The statement and the definition are one node.
                Stmt::FunctionDef(f) => NodeRef::Function(f).children(),
            },
            NodeRef::Expr(e) => match e {
                Expr::Str(..)
                | Expr::Num(..)
                | Expr::Bool(..)
                | Expr::NoneLit(..)
                | Expr::Name(..) => Vec::new(),
                Expr::FString(parts, _) => parts
                    .iter()
                    .map(|p| match p {
                        FsPart::Lit(s) => NodeRef::FsLit(s),
                        FsPart::Field(f) => NodeRef::FsField(f),
                    })
                    .collect(),
                Expr::NamedCapture { expr, .. } => vec![NodeRef::Expr(expr)],
                Expr::Call {
                    callee,
                    args,
                    kwargs,
                    ..
                } => {
                    let mut out = vec![NodeRef::Expr(callee)];
                    out.extend(args.iter().map(NodeRef::Expr));
                    out.extend(kwargs.iter().map(|(_, v)| NodeRef::Expr(v)));
                    out
                }
                Expr::BinOp { lhs, rhs, .. } | Expr::Compare { lhs, rhs, .. } => {
                    vec![NodeRef::Expr(lhs), NodeRef::Expr(rhs)]
                }
                Expr::List(items, _) => items.iter().map(NodeRef::Expr).collect(),
                Expr::ListComp { elt, iter, .. } => {
                    vec![NodeRef::Expr(elt), NodeRef::Expr(iter)]
                }
                Expr::Attribute { obj, .. } => vec![NodeRef::Expr(obj)],
            },
            NodeRef::FsLit(_) => Vec::new(),
            NodeRef::FsField(f) => vec![NodeRef::Expr(&f.expr)],
        }
    }
}

/// Total number of AST nodes in the module, each node counted once.
pub fn ast_size(module: &Module) -> usize {
    fn count(node: NodeRef<'_>) -> usize {
        1 + node.children().into_iter().map(count).sum::<usize>()
    }
    count(NodeRef::Module(module))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_sums_over_children() {
        // def f(): return 1  ->  Module + FunctionDef + Return + NumberLit = 4
        let module = Module {
            body: vec![Stmt::FunctionDef(FunctionDef {
                name: "f".into(),
                params: vec![],
                decorator: None,
                body: vec![Stmt::Return {
                    expr: Some(Expr::Num(NumLit::Int(1), Span::default())),
                    span: Span::default(),
                }],
                span: Span::default(),
            })],
        };
        assert_eq!(ast_size(&module), 4);
    }

    #[test]
    fn leaf_counts_one() {
        let module = Module {
            body: vec![Stmt::Expr {
                expr: Expr::Str("hi".into(), Span::default()),
                captured: false,
                span: Span::default(),
            }],
        };
        // Module + ExprStmt + StringLit
        assert_eq!(ast_size(&module), 3);
    }
}
