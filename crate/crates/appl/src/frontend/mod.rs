//! Source frontend: lexer, parser, AST, canonical printer, and the node-count
//! metric.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod printer;

pub use ast::{ast_size, CtxMode, Module, Span};
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::{parse, parse_source};
pub use printer::pretty_print;

/// Copy of the module with every span zeroed, for structural comparison.
pub fn normalize_spans(module: &ast::Module) -> ast::Module {
    use ast::*;

    fn norm_stmts(stmts: &[Stmt]) -> Vec<Stmt> {
        stmts.iter().map(norm_stmt).collect()
    }

    fn norm_stmt(stmt: &Stmt) -> Stmt {
        let zero = Span::default();
        match stmt {
            Stmt::Expr { expr, captured, .. } => Stmt::Expr {
                expr: norm_expr(expr),
                captured: *captured,
                span: zero,
            },
            Stmt::Assign { target, expr, .. } => Stmt::Assign {
                target: target.clone(),
                expr: norm_expr(expr),
                span: zero,
            },
            Stmt::Return { expr, .. } => Stmt::Return {
                expr: expr.as_ref().map(norm_expr),
                span: zero,
            },
            Stmt::With { scope, body, .. } => Stmt::With {
                scope: norm_expr(scope),
                body: norm_stmts(body),
                span: zero,
            },
            Stmt::For {
                var, iter, body, ..
            } => Stmt::For {
                var: var.clone(),
                iter: norm_expr(iter),
                body: norm_stmts(body),
                span: zero,
            },
            Stmt::If {
                branches,
                else_body,
                ..
            } => Stmt::If {
                branches: branches
                    .iter()
                    .map(|(c, b)| (norm_expr(c), norm_stmts(b)))
                    .collect(),
                else_body: else_body.as_ref().map(|b| norm_stmts(b)),
                span: zero,
            },
            Stmt::FunctionDef(f) => Stmt::FunctionDef(FunctionDef {
                name: f.name.clone(),
                params: f.params.clone(),
                decorator: f.decorator.as_ref().map(|d| Decorator {
                    ctx_mode: d.ctx_mode,
                    explicit: d.explicit,
                    span: zero,
                }),
                body: norm_stmts(&f.body),
                span: zero,
            }),
        }
    }

    fn norm_expr(expr: &Expr) -> Expr {
        let zero = Span::default();
        match expr {
            Expr::Str(s, _) => Expr::Str(s.clone(), zero),
            Expr::Num(n, _) => Expr::Num(n.clone(), zero),
            Expr::Bool(b, _) => Expr::Bool(*b, zero),
            Expr::NoneLit(_) => Expr::NoneLit(zero),
            Expr::Name(n, _) => Expr::Name(n.clone(), zero),
            Expr::FString(parts, _) => Expr::FString(
                parts
                    .iter()
                    .map(|p| match p {
                        FsPart::Lit(s) => FsPart::Lit(s.clone()),
                        FsPart::Field(f) => FsPart::Field(FStringField {
                            expr: norm_expr(&f.expr),
                            format_spec: f.format_spec.clone(),
                        }),
                    })
                    .collect(),
                zero,
            ),
            Expr::NamedCapture { name, expr, .. } => Expr::NamedCapture {
                name: name.clone(),
                expr: Box::new(norm_expr(expr)),
                span: zero,
            },
            Expr::Call {
                callee,
                args,
                kwargs,
                ..
            } => Expr::Call {
                callee: Box::new(norm_expr(callee)),
                args: args.iter().map(norm_expr).collect(),
                kwargs: kwargs
                    .iter()
                    .map(|(k, v)| (k.clone(), norm_expr(v)))
                    .collect(),
                span: zero,
            },
            Expr::BinOp { op, lhs, rhs, .. } => Expr::BinOp {
                op: *op,
                lhs: Box::new(norm_expr(lhs)),
                rhs: Box::new(norm_expr(rhs)),
                span: zero,
            },
            Expr::Compare { op, lhs, rhs, .. } => Expr::Compare {
                op: *op,
                lhs: Box::new(norm_expr(lhs)),
                rhs: Box::new(norm_expr(rhs)),
                span: zero,
            },
            Expr::List(items, _) => Expr::List(items.iter().map(norm_expr).collect(), zero),
            Expr::ListComp { elt, var, iter, .. } => Expr::ListComp {
                elt: Box::new(norm_expr(elt)),
                var: var.clone(),
                iter: Box::new(norm_expr(iter)),
                span: zero,
            },
            Expr::Attribute { obj, attr, .. } => Expr::Attribute {
                obj: Box::new(norm_expr(obj)),
                attr: attr.clone(),
                span: zero,
            },
        }
    }

    ast::Module {
        body: norm_stmts(&module.body),
    }
}
