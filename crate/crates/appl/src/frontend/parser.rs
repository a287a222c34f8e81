//! Recursive-descent parser for APPL-script.
//!
//! The grammar covers exactly the surface the bundled programs use: function
//! definitions with an optional `ppl` decorator, expression statements,
//! assignments, `return`, `with`, `for`, `if/elif/else`, parenthesized named
//! captures, list literals and single-clause comprehensions, f-strings with
//! format specs, calls with positional and keyword arguments, attribute
//! access, and the `+ - * == != < >` operators.

use super::ast::*;
use super::lexer::{decode_escapes, tokenize, Token, TokenKind};
use crate::error::ParseError;

pub fn parse(tokens: &[Token]) -> Result<Module, ParseError> {
    let mut parser = Parser { tokens, idx: 0 };
    parser.module()
}

/// Convenience for tests and tooling: tokenize + parse in one step.
pub fn parse_source(source: &str) -> Result<Module, crate::error::FrontendError> {
    let tokens = tokenize(source)?;
    Ok(parse(&tokens)?)
}

struct Parser<'a> {
    tokens: &'a [Token],
    idx: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.tokens[self.idx.min(self.tokens.len() - 1)]
    }

    fn peek_kind(&self) -> &TokenKind {
        &self.peek().kind
    }

    fn peek_ahead(&self, n: usize) -> Option<&TokenKind> {
        self.tokens.get(self.idx + n).map(|t| &t.kind)
    }

    fn bump(&mut self) -> &Token {
        let t = &self.tokens[self.idx.min(self.tokens.len() - 1)];
        if self.idx < self.tokens.len() {
            self.idx += 1;
        }
        t
    }

    fn span(&self) -> Span {
        self.peek().span
    }

    fn error(&self, expected: &str) -> ParseError {
        ParseError::new(
            format!("expected {expected}, found {}", self.peek_kind()),
            self.span(),
        )
    }

    fn expect_op(&mut self, op: &str) -> Result<Span, ParseError> {
        match self.peek_kind() {
            TokenKind::Op(o) if *o == op => Ok(self.bump().span),
            _ => Err(self.error(&format!("'{op}'"))),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<Span, ParseError> {
        match self.peek_kind() {
            TokenKind::Keyword(k) if *k == kw => Ok(self.bump().span),
            _ => Err(self.error(&format!("'{kw}'"))),
        }
    }

    fn expect_ident(&mut self) -> Result<(String, Span), ParseError> {
        match self.peek_kind().clone() {
            TokenKind::Ident(name) => {
                let span = self.bump().span;
                Ok((name, span))
            }
            _ => Err(self.error("identifier")),
        }
    }

    fn expect_newline(&mut self) -> Result<(), ParseError> {
        match self.peek_kind() {
            TokenKind::Newline => {
                self.bump();
                Ok(())
            }
            TokenKind::Eof => Ok(()),
            _ => Err(self.error("newline")),
        }
    }

    fn at_op(&self, op: &str) -> bool {
        matches!(self.peek_kind(), TokenKind::Op(o) if *o == op)
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek_kind(), TokenKind::Keyword(k) if *k == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.at_op(op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn module(&mut self) -> Result<Module, ParseError> {
        let mut body = Vec::new();
        loop {
            match self.peek_kind() {
                TokenKind::Eof => break,
                TokenKind::Newline => {
                    self.bump();
                }
                _ => body.push(self.statement(true)?),
            }
        }
        Ok(Module { body })
    }

    fn statement(&mut self, top_level: bool) -> Result<Stmt, ParseError> {
        match self.peek_kind() {
            TokenKind::Op("@") | TokenKind::Keyword("def") => {
                if !top_level {
                    return Err(ParseError::new(
                        "nested function definitions are not supported",
                        self.span(),
                    ));
                }
                Ok(Stmt::FunctionDef(self.function_def()?))
            }
            TokenKind::Keyword("return") => {
                let span = self.bump().span;
                let expr = if matches!(self.peek_kind(), TokenKind::Newline | TokenKind::Eof) {
                    None
                } else {
                    Some(self.expression()?)
                };
                self.expect_newline()?;
                Ok(Stmt::Return { expr, span })
            }
            TokenKind::Keyword("with") => {
                let span = self.bump().span;
                let scope = self.expression()?;
                self.expect_op(":")?;
                let body = self.block()?;
                Ok(Stmt::With { scope, body, span })
            }
            TokenKind::Keyword("for") => {
                let span = self.bump().span;
                let (var, _) = self.expect_ident()?;
                self.expect_keyword("in")?;
                let iter = self.expression()?;
                self.expect_op(":")?;
                let body = self.block()?;
                Ok(Stmt::For {
                    var,
                    iter,
                    body,
                    span,
                })
            }
            TokenKind::Keyword("if") => {
                let span = self.bump().span;
                let mut branches = Vec::new();
                let cond = self.expression()?;
                self.expect_op(":")?;
                branches.push((cond, self.block()?));
                let mut else_body = None;
                loop {
                    if self.at_keyword("elif") {
                        self.bump();
                        let cond = self.expression()?;
                        self.expect_op(":")?;
                        branches.push((cond, self.block()?));
                    } else if self.at_keyword("else") {
                        self.bump();
                        self.expect_op(":")?;
                        else_body = Some(self.block()?);
                        break;
                    } else {
                        break;
                    }
                }
                Ok(Stmt::If {
                    branches,
                    else_body,
                    span,
                })
            }
            TokenKind::Ident(_)
                if matches!(self.peek_ahead(1), Some(TokenKind::Op("="))) =>
            {
                let (target, span) = self.expect_ident()?;
                self.expect_op("=")?;
                let expr = self.expression()?;
                self.expect_newline()?;
                Ok(Stmt::Assign { target, expr, span })
            }
            _ => {
                let span = self.span();
                let expr = self.expression()?;
                self.expect_newline()?;
                Ok(Stmt::Expr {
                    expr,
                    captured: false,
                    span,
                })
            }
        }
    }

    fn function_def(&mut self) -> Result<FunctionDef, ParseError> {
        let decorator = if self.at_op("@") {
            Some(self.decorator()?)
        } else {
            None
        };
        let span = self.expect_keyword("def")?;
        let (name, _) = self.expect_ident()?;
        self.expect_op("(")?;
        let mut params = Vec::new();
        if !self.at_op(")") {
            loop {
                let (p, _) = self.expect_ident()?;
                params.push(p);
                if !self.eat_op(",") {
                    break;
                }
            }
        }
        self.expect_op(")")?;
        self.expect_op(":")?;
        let body = self.block()?;
        Ok(FunctionDef {
            name,
            params,
            decorator,
            body,
            span,
        })
    }

    fn decorator(&mut self) -> Result<Decorator, ParseError> {
        let span = self.expect_op("@")?;
        let (name, name_span) = self.expect_ident()?;
        if name != "ppl" {
            return Err(ParseError::new(
                format!("unsupported decorator '{name}'; only 'ppl' is allowed"),
                name_span,
            ));
        }
        let mut ctx_mode = CtxMode::New;
        let mut explicit = false;
        if self.eat_op("(") {
            if !self.at_op(")") {
                let (kw, kw_span) = self.expect_ident()?;
                if kw != "ctx" {
                    return Err(ParseError::new(
                        format!("unsupported decorator argument '{kw}'"),
                        kw_span,
                    ));
                }
                self.expect_op("=")?;
                let mode_span = self.span();
                match self.peek_kind().clone() {
                    TokenKind::Str(s) => {
                        self.bump();
                        ctx_mode = CtxMode::parse(&s).ok_or_else(|| {
                            ParseError::new(
                                format!(
                                    "unknown context mode '{s}'; expected one of new, copy, same, resume"
                                ),
                                mode_span,
                            )
                        })?;
                        explicit = true;
                    }
                    _ => return Err(self.error("context mode string")),
                }
            }
            self.expect_op(")")?;
        }
        self.expect_newline()?;
        Ok(Decorator {
            ctx_mode,
            explicit,
            span,
        })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect_newline()?;
        match self.peek_kind() {
            TokenKind::Indent => {
                self.bump();
            }
            _ => return Err(self.error("an indented block")),
        }
        let mut body = Vec::new();
        loop {
            match self.peek_kind() {
                TokenKind::Dedent => {
                    self.bump();
                    break;
                }
                TokenKind::Newline => {
                    self.bump();
                }
                TokenKind::Eof => return Err(self.error("dedent")),
                _ => body.push(self.statement(false)?),
            }
        }
        Ok(body)
    }

    fn expression(&mut self) -> Result<Expr, ParseError> {
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.arith()?;
        let op = match self.peek_kind() {
            TokenKind::Op("==") => Some(CmpOpKind::Eq),
            TokenKind::Op("!=") => Some(CmpOpKind::Ne),
            TokenKind::Op("<") => Some(CmpOpKind::Lt),
            TokenKind::Op(">") => Some(CmpOpKind::Gt),
            _ => None,
        };
        if let Some(op) = op {
            let span = self.bump().span;
            let rhs = self.arith()?;
            Ok(Expr::Compare {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                span,
            })
        } else {
            Ok(lhs)
        }
    }

    fn arith(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek_kind() {
                TokenKind::Op("+") => BinOpKind::Add,
                TokenKind::Op("-") => BinOpKind::Sub,
                _ => break,
            };
            let span = self.bump().span;
            let rhs = self.term()?;
            lhs = Expr::BinOp {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                span,
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.postfix()?;
        while self.at_op("*") {
            let span = self.bump().span;
            let rhs = self.postfix()?;
            lhs = Expr::BinOp {
                op: BinOpKind::Mul,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                span,
            };
        }
        Ok(lhs)
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut expr = self.atom()?;
        loop {
            if self.at_op("(") {
                let span = self.bump().span;
                let (args, kwargs) = self.call_args()?;
                expr = Expr::Call {
                    callee: Box::new(expr),
                    args,
                    kwargs,
                    span,
                };
            } else if self.at_op(".") {
                let span = self.bump().span;
                let (attr, _) = self.expect_ident()?;
                expr = Expr::Attribute {
                    obj: Box::new(expr),
                    attr,
                    span,
                };
            } else {
                break;
            }
        }
        Ok(expr)
    }

    fn call_args(&mut self) -> Result<(Vec<Expr>, Vec<(String, Expr)>), ParseError> {
        let mut args = Vec::new();
        let mut kwargs: Vec<(String, Expr)> = Vec::new();
        if !self.at_op(")") {
            loop {
                let is_kwarg = matches!(self.peek_kind(), TokenKind::Ident(_))
                    && matches!(self.peek_ahead(1), Some(TokenKind::Op("=")));
                if is_kwarg {
                    let (name, name_span) = self.expect_ident()?;
                    self.expect_op("=")?;
                    let value = self.expression()?;
                    if kwargs.iter().any(|(n, _)| *n == name) {
                        return Err(ParseError::new(
                            format!("duplicate keyword argument '{name}'"),
                            name_span,
                        ));
                    }
                    kwargs.push((name, value));
                } else {
                    if !kwargs.is_empty() {
                        return Err(ParseError::new(
                            "positional argument after keyword argument",
                            self.span(),
                        ));
                    }
                    args.push(self.expression()?);
                }
                if !self.eat_op(",") {
                    break;
                }
            }
        }
        self.expect_op(")")?;
        Ok((args, kwargs))
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let span = self.span();
        match self.peek_kind().clone() {
            TokenKind::Str(s) => {
                self.bump();
                Ok(Expr::Str(s, span))
            }
            TokenKind::FStr(raw) => {
                self.bump();
                let parts = parse_fstring_parts(&raw, span)?;
                Ok(Expr::FString(parts, span))
            }
            TokenKind::Int(v) => {
                self.bump();
                Ok(Expr::Num(NumLit::Int(v), span))
            }
            TokenKind::Float(v) => {
                self.bump();
                Ok(Expr::Num(NumLit::Float(v), span))
            }
            TokenKind::Keyword("True") => {
                self.bump();
                Ok(Expr::Bool(true, span))
            }
            TokenKind::Keyword("False") => {
                self.bump();
                Ok(Expr::Bool(false, span))
            }
            TokenKind::Keyword("None") => {
                self.bump();
                Ok(Expr::NoneLit(span))
            }
            TokenKind::Ident(name) => {
                self.bump();
                Ok(Expr::Name(name, span))
            }
            TokenKind::Op("(") => {
                self.bump();
                // Parenthesized named capture `(x := e)` or a grouped expression.
                let is_capture = matches!(self.peek_kind(), TokenKind::Ident(_))
                    && matches!(self.peek_ahead(1), Some(TokenKind::Op(":=")));
                let expr = if is_capture {
                    let (name, cap_span) = self.expect_ident()?;
                    self.expect_op(":=")?;
                    let inner = self.expression()?;
                    Expr::NamedCapture {
                        name,
                        expr: Box::new(inner),
                        span: cap_span,
                    }
                } else {
                    self.expression()?
                };
                self.expect_op(")")?;
                Ok(expr)
            }
            TokenKind::Op("[") => {
                self.bump();
                if self.at_op("]") {
                    self.bump();
                    return Ok(Expr::List(Vec::new(), span));
                }
                let first = self.expression()?;
                if self.at_keyword("for") {
                    self.bump();
                    let (var, _) = self.expect_ident()?;
                    self.expect_keyword("in")?;
                    let iter = self.expression()?;
                    self.expect_op("]")?;
                    Ok(Expr::ListComp {
                        elt: Box::new(first),
                        var,
                        iter: Box::new(iter),
                        span,
                    })
                } else {
                    let mut items = vec![first];
                    while self.eat_op(",") {
                        if self.at_op("]") {
                            break;
                        }
                        items.push(self.expression()?);
                    }
                    self.expect_op("]")?;
                    Ok(Expr::List(items, span))
                }
            }
            _ => Err(self.error("an expression")),
        }
    }
}

/// Split the raw inner text of an f-string into literal and field parts.
///
/// `{{` and `}}` are brace escapes. Within a field, the first `:` at bracket
/// depth zero (that is not part of `:=`) starts the format spec. Nested
/// f-strings inside fields are rejected.
fn parse_fstring_parts(raw: &str, span: Span) -> Result<Vec<FsPart>, ParseError> {
    let chars: Vec<char> = raw.chars().collect();
    let mut parts: Vec<FsPart> = Vec::new();
    let mut lit = String::new();
    let mut i = 0usize;
    while i < chars.len() {
        match chars[i] {
            '{' if chars.get(i + 1) == Some(&'{') => {
                lit.push('{');
                i += 2;
            }
            '}' if chars.get(i + 1) == Some(&'}') => {
                lit.push('}');
                i += 2;
            }
            '}' => {
                return Err(ParseError::new("single '}' in f-string", span));
            }
            '{' => {
                if !lit.is_empty() {
                    parts.push(FsPart::Lit(decode_lit(&lit, span)?));
                    lit.clear();
                }
                i += 1;
                let field_start = i;
                let mut depth = 0usize;
                let mut spec_start: Option<usize> = None;
                let mut quote: Option<char> = None;
                while i < chars.len() {
                    let c = chars[i];
                    if let Some(q) = quote {
                        if c == '\\' {
                            i += 1;
                        } else if c == q {
                            quote = None;
                        }
                    } else {
                        match c {
                            '"' | '\'' => quote = Some(c),
                            '(' | '[' => depth += 1,
                            ')' | ']' => depth = depth.saturating_sub(1),
                            ':' if depth == 0 && spec_start.is_none() => {
                                if chars.get(i + 1) == Some(&'=') {
                                    // part of ':=', skip both
                                    i += 1;
                                } else {
                                    spec_start = Some(i);
                                }
                            }
                            '}' if depth == 0 => break,
                            _ => {}
                        }
                    }
                    i += 1;
                }
                if i >= chars.len() {
                    return Err(ParseError::new("unterminated '{' in f-string", span));
                }
                let (expr_end, format_spec) = match spec_start {
                    Some(s) => (
                        s,
                        Some(chars[s + 1..i].iter().collect::<String>()),
                    ),
                    None => (i, None),
                };
                let expr_src: String = chars[field_start..expr_end].iter().collect();
                if expr_src.trim().is_empty() {
                    return Err(ParseError::new("empty f-string field", span));
                }
                let expr = parse_field_expr(&expr_src, span)?;
                parts.push(FsPart::Field(FStringField { expr, format_spec }));
                i += 1; // consume '}'
            }
            c => {
                lit.push(c);
                i += 1;
            }
        }
    }
    if !lit.is_empty() {
        parts.push(FsPart::Lit(decode_lit(&lit, span)?));
    }
    Ok(parts)
}

fn decode_lit(raw: &str, span: Span) -> Result<String, ParseError> {
    decode_escapes(raw, span).map_err(|e| ParseError::new(e.message, e.span))
}

fn parse_field_expr(src: &str, span: Span) -> Result<Expr, ParseError> {
    let tokens =
        tokenize(src).map_err(|e| ParseError::new(format!("in f-string field: {}", e.message), span))?;
    if tokens
        .iter()
        .any(|t| matches!(t.kind, TokenKind::FStr(_)))
    {
        return Err(ParseError::new(
            "nested f-strings are not supported",
            span,
        ));
    }
    let mut parser = Parser {
        tokens: &tokens,
        idx: 0,
    };
    // Allow the bare `x := e` form inside fields (Python requires no extra
    // parens there).
    let is_capture = matches!(parser.peek_kind(), TokenKind::Ident(_))
        && matches!(parser.peek_ahead(1), Some(TokenKind::Op(":=")));
    let expr = if is_capture {
        let (name, cap_span) = parser.expect_ident()?;
        parser.expect_op(":=")?;
        let inner = parser.expression()?;
        Expr::NamedCapture {
            name,
            expr: Box::new(inner),
            span: cap_span,
        }
    } else {
        parser.expression()?
    };
    match parser.peek_kind() {
        TokenKind::Newline | TokenKind::Eof => Ok(expr),
        other => Err(ParseError::new(
            format!("unexpected {other} in f-string field"),
            span,
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decorator_ctx_mode() {
        let m = parse_source("@ppl(ctx=\"copy\")\ndef f():\n    return gen()\n").unwrap();
        match &m.body[0] {
            Stmt::FunctionDef(f) => {
                assert_eq!(f.decorator.as_ref().unwrap().ctx_mode, CtxMode::Copy);
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn bare_decorator_defaults_to_new() {
        let m = parse_source("@ppl\ndef f():\n    return 1\n").unwrap();
        match &m.body[0] {
            Stmt::FunctionDef(f) => {
                assert_eq!(f.decorator.as_ref().unwrap().ctx_mode, CtxMode::New);
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn unknown_ctx_mode_rejected() {
        let err = parse_source("@ppl(ctx=\"fresh\")\ndef f():\n    return 1\n").unwrap_err();
        assert!(err.to_string().contains("unknown context mode"));
    }

    #[test]
    fn fstring_with_call_field() {
        let m = parse_source("@ppl\ndef f():\n    f\"The name of the author is {gen()}\"\n")
            .unwrap();
        let Stmt::FunctionDef(f) = &m.body[0] else {
            panic!()
        };
        let Stmt::Expr { expr, .. } = &f.body[0] else {
            panic!()
        };
        let Expr::FString(parts, _) = expr else {
            panic!()
        };
        assert_eq!(parts.len(), 2);
        assert!(matches!(&parts[0], FsPart::Lit(s) if s == "The name of the author is "));
        match &parts[1] {
            FsPart::Field(field) => assert!(matches!(&field.expr, Expr::Call { .. })),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn fstring_named_capture_with_format_spec() {
        let m = parse_source("@ppl\ndef f():\n    f\"prefix{(foo := gen()):>10}suffix\"\n")
            .unwrap();
        let Stmt::FunctionDef(f) = &m.body[0] else {
            panic!()
        };
        let Stmt::Expr { expr, .. } = &f.body[0] else {
            panic!()
        };
        let Expr::FString(parts, _) = expr else {
            panic!()
        };
        assert_eq!(parts.len(), 3);
        match &parts[1] {
            FsPart::Field(field) => {
                assert_eq!(field.format_spec.as_deref(), Some(">10"));
                assert!(matches!(&field.expr, Expr::NamedCapture { .. }));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn nested_fstring_rejected() {
        let err = parse_source("x = f\"a{f'b'}c\"\n").unwrap_err();
        assert!(err.to_string().contains("nested f-strings"));
    }

    #[test]
    fn dedent_mismatch_names_line() {
        let err = parse_source("def f():\n    x = 1\n  y = 2\n").unwrap_err();
        assert!(err.to_string().contains("3:"));
    }

    #[test]
    fn list_comprehension() {
        let m = parse_source("x = [gen() for q in questions]\n").unwrap();
        let Stmt::Assign { expr, .. } = &m.body[0] else {
            panic!()
        };
        assert!(matches!(expr, Expr::ListComp { .. }));
    }

    #[test]
    fn parse_is_pure() {
        let src = "@ppl\ndef f(a, b):\n    a\n    return gen()\n";
        assert_eq!(parse_source(src).unwrap(), parse_source(src).unwrap());
    }
}
