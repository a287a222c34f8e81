//! Canonical source printer. Round-tripping `parse -> print -> parse` yields
//! a structurally equal AST; tests rely on that stability.

use super::ast::*;

pub fn pretty_print(module: &Module) -> String {
    let mut out = String::new();
    for (i, stmt) in module.body.iter().enumerate() {
        if i > 0 && matches!(stmt, Stmt::FunctionDef(_)) {
            out.push('\n');
        }
        print_stmt(stmt, 0, &mut out);
    }
    out
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn print_block(body: &[Stmt], level: usize, out: &mut String) {
    if body.is_empty() {
        indent(level, out);
        out.push_str("None\n"); // canonical empty block placeholder
        return;
    }
    for stmt in body {
        print_stmt(stmt, level, out);
    }
}

fn print_stmt(stmt: &Stmt, level: usize, out: &mut String) {
    match stmt {
        Stmt::FunctionDef(f) => {
            if let Some(d) = &f.decorator {
                indent(level, out);
                if d.explicit {
                    out.push_str(&format!("@ppl(ctx=\"{}\")\n", d.ctx_mode.as_str()));
                } else {
                    out.push_str("@ppl\n");
                }
            }
            indent(level, out);
            out.push_str(&format!("def {}({}):\n", f.name, f.params.join(", ")));
            print_block(&f.body, level + 1, out);
        }
        Stmt::Expr { expr, .. } => {
            indent(level, out);
            print_expr(expr, out);
            out.push('\n');
        }
        Stmt::Assign { target, expr, .. } => {
            indent(level, out);
            out.push_str(target);
            out.push_str(" = ");
            print_expr(expr, out);
            out.push('\n');
        }
        Stmt::Return { expr, .. } => {
            indent(level, out);
            out.push_str("return");
            if let Some(e) = expr {
                out.push(' ');
                print_expr(e, out);
            }
            out.push('\n');
        }
        Stmt::With { scope, body, .. } => {
            indent(level, out);
            out.push_str("with ");
            print_expr(scope, out);
            out.push_str(":\n");
            print_block(body, level + 1, out);
        }
        Stmt::For {
            var, iter, body, ..
        } => {
            indent(level, out);
            out.push_str(&format!("for {var} in "));
            print_expr(iter, out);
            out.push_str(":\n");
            print_block(body, level + 1, out);
        }
        Stmt::If {
            branches,
            else_body,
            ..
        } => {
            for (i, (cond, body)) in branches.iter().enumerate() {
                indent(level, out);
                out.push_str(if i == 0 { "if " } else { "elif " });
                print_expr(cond, out);
                out.push_str(":\n");
                print_block(body, level + 1, out);
            }
            if let Some(body) = else_body {
                indent(level, out);
                out.push_str("else:\n");
                print_block(body, level + 1, out);
            }
        }
    }
}

fn escape_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

fn escape_fstring_lit(s: &str) -> String {
    escape_str(s).replace('{', "{{").replace('}', "}}")
}

fn print_expr(expr: &Expr, out: &mut String) {
    match expr {
        Expr::Str(s, _) => out.push_str(&format!("\"{}\"", escape_str(s))),
        Expr::Num(NumLit::Int(v), _) => out.push_str(&v.to_string()),
        Expr::Num(NumLit::Float(v), _) => {
            let text = v.to_string();
            out.push_str(&text);
            if !text.contains('.') {
                out.push_str(".0");
            }
        }
        Expr::Bool(true, _) => out.push_str("True"),
        Expr::Bool(false, _) => out.push_str("False"),
        Expr::NoneLit(_) => out.push_str("None"),
        Expr::Name(n, _) => out.push_str(n),
        Expr::FString(parts, _) => {
            out.push_str("f\"");
            for part in parts {
                match part {
                    FsPart::Lit(s) => out.push_str(&escape_fstring_lit(s)),
                    FsPart::Field(f) => {
                        out.push('{');
                        print_expr(&f.expr, out);
                        if let Some(spec) = &f.format_spec {
                            out.push(':');
                            out.push_str(spec);
                        }
                        out.push('}');
                    }
                }
            }
            out.push('"');
        }
        Expr::NamedCapture { name, expr, .. } => {
            out.push('(');
            out.push_str(name);
            out.push_str(" := ");
            print_expr(expr, out);
            out.push(')');
        }
        Expr::Call {
            callee,
            args,
            kwargs,
            ..
        } => {
            print_expr(callee, out);
            out.push('(');
            let mut first = true;
            for a in args {
                if !first {
                    out.push_str(", ");
                }
                first = false;
                print_expr(a, out);
            }
            for (k, v) in kwargs {
                if !first {
                    out.push_str(", ");
                }
                first = false;
                out.push_str(k);
                out.push('=');
                print_expr(v, out);
            }
            out.push(')');
        }
        Expr::BinOp { op, lhs, rhs, .. } => {
            print_nested(lhs, out);
            out.push_str(&format!(" {} ", op.as_str()));
            print_nested(rhs, out);
        }
        Expr::Compare { op, lhs, rhs, .. } => {
            print_nested(lhs, out);
            out.push_str(&format!(" {} ", op.as_str()));
            print_nested(rhs, out);
        }
        Expr::List(items, _) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print_expr(item, out);
            }
            out.push(']');
        }
        Expr::ListComp { elt, var, iter, .. } => {
            out.push('[');
            print_expr(elt, out);
            out.push_str(&format!(" for {var} in "));
            print_expr(iter, out);
            out.push(']');
        }
        Expr::Attribute { obj, attr, .. } => {
            print_nested(obj, out);
            out.push('.');
            out.push_str(attr);
        }
    }
}

/// Parenthesize operands that would otherwise reassociate.
fn print_nested(expr: &Expr, out: &mut String) {
    match expr {
        Expr::BinOp { .. } | Expr::Compare { .. } => {
            out.push('(');
            print_expr(expr, out);
            out.push(')');
        }
        _ => print_expr(expr, out),
    }
}
