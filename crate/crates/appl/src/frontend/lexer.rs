//! Hand-written lexer producing an indentation-aware token stream.
//!
//! Indentation changes are emitted as explicit `Indent`/`Dedent` tokens, which
//! are balanced over any well-formed file. Newlines inside parentheses or
//! brackets are suppressed (implicit line joining).

use std::fmt;

use super::ast::Span;
use crate::error::LexError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Keyword(&'static str),
    Ident(String),
    /// A plain string literal; `text` holds the decoded content.
    Str(String),
    /// An f-string; `text` holds the raw inner text with escapes unprocessed.
    /// The parser splits it into literal parts and expression fields.
    FStr(String),
    Int(i64),
    Float(f64),
    Op(&'static str),
    Indent,
    Dedent,
    Newline,
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Keyword(k) => write!(f, "keyword '{k}'"),
            TokenKind::Ident(n) => write!(f, "identifier '{n}'"),
            TokenKind::Str(_) => write!(f, "string literal"),
            TokenKind::FStr(_) => write!(f, "f-string"),
            TokenKind::Int(_) | TokenKind::Float(_) => write!(f, "number"),
            TokenKind::Op(op) => write!(f, "'{op}'"),
            TokenKind::Indent => write!(f, "indent"),
            TokenKind::Dedent => write!(f, "dedent"),
            TokenKind::Newline => write!(f, "newline"),
            TokenKind::Eof => write!(f, "end of file"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

const KEYWORDS: &[&str] = &[
    "def", "return", "with", "for", "in", "if", "elif", "else", "True", "False", "None",
];

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
    tokens: Vec<Token>,
    indents: Vec<usize>,
    paren_depth: usize,
    indent_char: Option<u8>,
}

/// Tokenize APPL-script source. CRLF line endings are normalized to LF.
pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    let normalized = source.replace("\r\n", "\n");
    let mut lexer = Lexer {
        src: normalized.as_bytes(),
        pos: 0,
        line: 1,
        col: 1,
        tokens: Vec::new(),
        indents: vec![0],
        paren_depth: 0,
        indent_char: None,
    };
    lexer.run()?;
    Ok(lexer.tokens)
}

impl<'a> Lexer<'a> {
    fn run(&mut self) -> Result<(), LexError> {
        let mut at_line_start = true;
        while self.pos < self.src.len() {
            if at_line_start && self.paren_depth == 0 {
                self.handle_indentation()?;
                at_line_start = false;
                if self.pos >= self.src.len() {
                    break;
                }
            }
            let c = self.src[self.pos];
            match c {
                b'\n' => {
                    if self.paren_depth == 0 {
                        // Skip the newline token for blank lines.
                        if self
                            .tokens
                            .last()
                            .map(|t| {
                                !matches!(
                                    t.kind,
                                    TokenKind::Newline | TokenKind::Indent | TokenKind::Dedent
                                )
                            })
                            .unwrap_or(false)
                        {
                            self.push(TokenKind::Newline);
                        }
                        at_line_start = true;
                    }
                    self.advance();
                }
                b' ' | b'\t' => {
                    self.advance();
                }
                b'#' => {
                    while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                        self.advance();
                    }
                }
                b'"' | b'\'' => self.lex_string(false)?,
                b'f' if self.peek(1) == Some(b'"') || self.peek(1) == Some(b'\'') => {
                    self.advance(); // consume 'f'
                    self.lex_string(true)?;
                }
                b'0'..=b'9' => self.lex_number()?,
                c if c == b'_' || c.is_ascii_alphabetic() => self.lex_ident(),
                _ => self.lex_operator()?,
            }
        }
        // Trailing newline + dedents + eof.
        if self
            .tokens
            .last()
            .map(|t| !matches!(t.kind, TokenKind::Newline))
            .unwrap_or(false)
        {
            self.push(TokenKind::Newline);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(TokenKind::Dedent);
        }
        self.push(TokenKind::Eof);
        Ok(())
    }

    fn peek(&self, ahead: usize) -> Option<u8> {
        self.src.get(self.pos + ahead).copied()
    }

    fn advance(&mut self) {
        if self.src[self.pos] == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        self.pos += 1;
    }

    fn push(&mut self, kind: TokenKind) {
        self.tokens.push(Token {
            kind,
            span: Span::new(self.line, self.col),
        });
    }

    fn push_at(&mut self, kind: TokenKind, span: Span) {
        self.tokens.push(Token { kind, span });
    }

    fn handle_indentation(&mut self) -> Result<(), LexError> {
        loop {
            let start = self.pos;
            let mut width = 0usize;
            while let Some(c) = self.peek(0) {
                if c == b' ' || c == b'\t' {
                    match self.indent_char {
                        None => self.indent_char = Some(c),
                        Some(ic) if ic != c => {
                            return Err(LexError::new(
                                "mixed tabs and spaces in indentation",
                                Span::new(self.line, self.col),
                            ));
                        }
                        _ => {}
                    }
                    width += 1;
                    self.advance();
                } else {
                    break;
                }
            }
            match self.peek(0) {
                // Blank or comment-only lines do not affect indentation.
                Some(b'\n') => {
                    self.advance();
                    continue;
                }
                Some(b'#') => {
                    while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                        self.advance();
                    }
                    continue;
                }
                None => {
                    let _ = start;
                    return Ok(());
                }
                _ => {
                    let current = *self.indents.last().unwrap();
                    if width > current {
                        self.indents.push(width);
                        self.push(TokenKind::Indent);
                    } else if width < current {
                        while *self.indents.last().unwrap() > width {
                            self.indents.pop();
                            self.push(TokenKind::Dedent);
                        }
                        if *self.indents.last().unwrap() != width {
                            return Err(LexError::new(
                                "unindent does not match any outer indentation level",
                                Span::new(self.line, self.col),
                            ));
                        }
                    }
                    return Ok(());
                }
            }
        }
    }

    fn lex_string(&mut self, is_fstring: bool) -> Result<(), LexError> {
        let span = Span::new(self.line, self.col);
        let quote = self.src[self.pos];
        self.advance();
        let mut raw = String::new();
        loop {
            match self.peek(0) {
                None | Some(b'\n') => {
                    return Err(LexError::new("unterminated string literal", span));
                }
                Some(c) if c == quote => {
                    self.advance();
                    break;
                }
                Some(b'\\') => {
                    raw.push('\\');
                    self.advance();
                    match self.peek(0) {
                        None | Some(b'\n') => {
                            return Err(LexError::new("unterminated string literal", span));
                        }
                        Some(c) => {
                            raw.push(c as char);
                            self.advance();
                        }
                    }
                }
                Some(_) => {
                    // Track byte position to copy multi-byte characters intact.
                    let start = self.pos;
                    while self.pos < self.src.len()
                        && !matches!(self.src[self.pos], b'\\' | b'\n')
                        && self.src[self.pos] != quote
                    {
                        self.advance();
                    }
                    raw.push_str(std::str::from_utf8(&self.src[start..self.pos]).unwrap());
                }
            }
        }
        if is_fstring {
            self.push_at(TokenKind::FStr(raw), span);
        } else {
            let decoded = decode_escapes(&raw, span)?;
            self.push_at(TokenKind::Str(decoded), span);
        }
        Ok(())
    }

    fn lex_number(&mut self) -> Result<(), LexError> {
        let span = Span::new(self.line, self.col);
        let start = self.pos;
        let mut is_float = false;
        while let Some(c) = self.peek(0) {
            if c.is_ascii_digit() {
                self.advance();
            } else if c == b'.' && !is_float && self.peek(1).map_or(false, |d| d.is_ascii_digit()) {
                is_float = true;
                self.advance();
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let kind = if is_float {
            TokenKind::Float(
                text.parse()
                    .map_err(|_| LexError::new("invalid number literal", span))?,
            )
        } else {
            TokenKind::Int(
                text.parse()
                    .map_err(|_| LexError::new("integer literal out of range", span))?,
            )
        };
        self.push_at(kind, span);
        Ok(())
    }

    fn lex_ident(&mut self) {
        let span = Span::new(self.line, self.col);
        let start = self.pos;
        while let Some(c) = self.peek(0) {
            if c == b'_' || c.is_ascii_alphanumeric() {
                self.advance();
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let kind = match KEYWORDS.iter().find(|k| **k == text) {
            Some(k) => TokenKind::Keyword(k),
            None => TokenKind::Ident(text.to_string()),
        };
        self.push_at(kind, span);
    }

    fn lex_operator(&mut self) -> Result<(), LexError> {
        let span = Span::new(self.line, self.col);
        let two: Option<&'static str> = match (self.peek(0), self.peek(1)) {
            (Some(b':'), Some(b'=')) => Some(":="),
            (Some(b'='), Some(b'=')) => Some("=="),
            (Some(b'!'), Some(b'=')) => Some("!="),
            _ => None,
        };
        if let Some(op) = two {
            self.advance();
            self.advance();
            self.push_at(TokenKind::Op(op), span);
            return Ok(());
        }
        let op: &'static str = match self.peek(0).unwrap() {
            b'+' => "+",
            b'-' => "-",
            b'*' => "*",
            b'<' => "<",
            b'>' => ">",
            b'=' => "=",
            b':' => ":",
            b',' => ",",
            b'.' => ".",
            b'@' => "@",
            b'(' => {
                self.paren_depth += 1;
                "("
            }
            b')' => {
                self.paren_depth = self.paren_depth.saturating_sub(1);
                ")"
            }
            b'[' => {
                self.paren_depth += 1;
                "["
            }
            b']' => {
                self.paren_depth = self.paren_depth.saturating_sub(1);
                "]"
            }
            c => {
                return Err(LexError::new(
                    format!("illegal character '{}'", c as char),
                    span,
                ));
            }
        };
        self.advance();
        self.push_at(TokenKind::Op(op), span);
        Ok(())
    }
}

/// Decode the supported escapes: `\n \t \" \' \\`.
pub fn decode_escapes(raw: &str, span: Span) -> Result<String, LexError> {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some('"') => out.push('"'),
                Some('\'') => out.push('\''),
                Some('\\') => out.push('\\'),
                Some(other) => {
                    return Err(LexError::new(
                        format!("unsupported escape '\\{other}'"),
                        span,
                    ));
                }
                None => return Err(LexError::new("trailing backslash", span)),
            }
        } else {
            out.push(c);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn empty_file() {
        assert_eq!(kinds(""), vec![TokenKind::Eof]);
    }

    #[test]
    fn single_literal() {
        assert_eq!(
            kinds("\"hi\""),
            vec![
                TokenKind::Str("hi".into()),
                TokenKind::Newline,
                TokenKind::Eof
            ]
        );
    }

    #[test]
    fn indents_balance() {
        let toks = kinds("def f():\n    return 1\n");
        let indents = toks
            .iter()
            .filter(|t| matches!(t, TokenKind::Indent))
            .count();
        let dedents = toks
            .iter()
            .filter(|t| matches!(t, TokenKind::Dedent))
            .count();
        assert_eq!(indents, dedents);
        assert_eq!(indents, 1);
    }

    #[test]
    fn fig1_body_tokenizes() {
        let src = r#"@ppl(ctx="copy")
def get_answer(question):
    question
    return gen()

@ppl
def answer_questions(quotation, questions):
    "Extract the name of the author from the quotation below and answer questions."
    quotation
    with AIRole():
        f"The name of the author is {gen()}"
    return [get_answer(q) for q in questions]
"#;
        let toks = kinds(src);
        let indents = toks
            .iter()
            .filter(|t| matches!(t, TokenKind::Indent))
            .count();
        let dedents = toks
            .iter()
            .filter(|t| matches!(t, TokenKind::Dedent))
            .count();
        assert_eq!(indents, dedents);
    }

    #[test]
    fn positions_non_decreasing() {
        let toks = tokenize("x = 1\ny = \"a\" + \"b\"\n").unwrap();
        for pair in toks.windows(2) {
            let a = pair[0].span;
            let b = pair[1].span;
            assert!((b.line, b.column) >= (a.line, a.column));
        }
    }

    #[test]
    fn mixed_indentation_rejected() {
        let err = tokenize("def f():\n    x = 1\n\ty = 2\n").unwrap_err();
        assert!(err.to_string().contains("tabs"));
    }

    #[test]
    fn unterminated_string_reports_position() {
        let err = tokenize("x = \"oops\n").unwrap_err();
        assert!(err.to_string().contains("unterminated"));
        assert_eq!(err.span.line, 1);
        assert_eq!(err.span.column, 5);
    }

    #[test]
    fn implicit_line_joining_in_brackets() {
        let toks = kinds("x = [1,\n     2]\n");
        assert!(!toks
            .iter()
            .any(|t| matches!(t, TokenKind::Indent | TokenKind::Dedent)));
    }
}
