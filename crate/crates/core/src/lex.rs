//! Line lexer shared by the patch and equation formats.

use crate::diag::{Code, Diagnostic, Location, SourceSpan};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    /// Unsigned decimal literal, with its source text.
    Number(f64, String),
    Sym(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

const SYMBOLS: [&str; 14] = [
    "->", "=", "(", ")", "[", "]", ",", ".", "+", "-", "*", "/", "^", ":",
];

/// Identifier rule of both formats.
pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Splits one line (comment already allowed, `#` to end of line) into
/// tokens. A trailing run of `'` after an identifier is kept as `Sym("'")`
/// tokens.
pub(crate) fn lex_line(line: &str, line_no: usize) -> Result<Vec<Token>, Diagnostic> {
    let bytes = line.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let span = |len: usize| SourceSpan::new(line_no, i + 1, len);
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let text = &line[start..i];
            let sp = SourceSpan::new(line_no, start + 1, i - start);
            if !is_identifier(text) {
                return Err(Diagnostic::error(
                    Code::Syntax,
                    Location::Patch,
                    format!("identifier `{text}` must match [a-z_][a-z0-9_]*"),
                )
                .at(sp));
            }
            out.push(Token {
                tok: Tok::Ident(text.to_string()),
                span: sp,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &line[start..i];
            let sp = SourceSpan::new(line_no, start + 1, i - start);
            if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
                return Err(Diagnostic::error(
                    Code::Syntax,
                    Location::Patch,
                    format!("malformed number `{}`", &line[start..=i]),
                )
                .at(sp));
            }
            let value: f64 = text.parse().map_err(|_| {
                Diagnostic::error(Code::Syntax, Location::Patch, format!("malformed number `{text}`"))
                    .at(sp)
            })?;
            out.push(Token {
                tok: Tok::Number(value, text.to_string()),
                span: sp,
            });
            continue;
        }
        if c == '\'' {
            out.push(Token {
                tok: Tok::Sym("'"),
                span: span(1),
            });
            i += 1;
            continue;
        }
        match SYMBOLS.iter().find(|s| line[i..].starts_with(**s)) {
            Some(sym) => {
                out.push(Token {
                    tok: Tok::Sym(sym),
                    span: span(sym.len()),
                });
                i += sym.len();
            }
            None => {
                let ch = line[i..].chars().next().unwrap_or(c);
                return Err(Diagnostic::error(
                    Code::Syntax,
                    Location::Patch,
                    format!("unexpected character `{ch}`"),
                )
                .at(span(ch.len_utf8())));
            }
        }
    }
    Ok(out)
}

/// Token cursor over one statement.
pub(crate) struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
    line_len: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(toks: &'a [Token], line: usize, line_len: usize) -> Self {
        Self {
            toks,
            pos: 0,
            line,
            line_len,
        }
    }

    pub fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    pub fn peek_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Sym(s), .. }) if *s == sym)
    }

    pub fn next(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    /// Span of the current token, or of the end of the line.
    pub fn here(&self) -> SourceSpan {
        match self.peek() {
            Some(t) => t.span,
            None => SourceSpan::new(self.line, self.line_len.max(1), 1),
        }
    }

    pub fn error(&self, message: impl Into<String>) -> Diagnostic {
        Diagnostic::error(Code::Syntax, Location::Patch, message).at(self.here())
    }

    pub fn expect_sym(&mut self, sym: &str) -> Result<SourceSpan, Diagnostic> {
        if self.peek_sym(sym) {
            Ok(self.next().expect("peeked").span)
        } else {
            Err(self.error(format!("expected `{sym}`{}", self.found())))
        }
    }

    pub fn expect_ident(&mut self) -> Result<(String, SourceSpan), Diagnostic> {
        match self.peek() {
            Some(Token {
                tok: Tok::Ident(name),
                span,
            }) => {
                self.pos += 1;
                Ok((name.clone(), *span))
            }
            _ => Err(self.error(format!("expected identifier{}", self.found()))),
        }
    }

    pub fn expect_end(&self) -> Result<(), Diagnostic> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.error(format!("unexpected trailing input{}", self.found())))
        }
    }

    fn found(&self) -> String {
        match self.peek() {
            None => ", found end of line".into(),
            Some(Token { tok, .. }) => match tok {
                Tok::Ident(s) => format!(", found `{s}`"),
                Tok::Number(_, s) => format!(", found `{s}`"),
                Tok::Sym(s) => format!(", found `{s}`"),
            },
        }
    }
}
