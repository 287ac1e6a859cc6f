//! Tokenizer for brace-delimited C-family sources (Java grammar).
//!
//! Comments are reported as tokens so callers can decide whether to keep
//! them; every token carries its byte span and 1-based line.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Keyword,
    Number,
    Str,
    Char,
    Op,
    LineComment,
    BlockComment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
    pub line: usize,
}

impl Token<'_> {
    pub fn is_comment(&self) -> bool {
        matches!(self.kind, TokenKind::LineComment | TokenKind::BlockComment)
    }

    pub fn is_op(&self, op: &str) -> bool {
        self.kind == TokenKind::Op && self.text == op
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        self.kind == TokenKind::Keyword && self.text == kw
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LexError {
    #[error("unterminated block comment starting on line {0}")]
    UnterminatedComment(usize),
    #[error("unterminated string literal on line {0}")]
    UnterminatedString(usize),
    #[error("unterminated character literal on line {0}")]
    UnterminatedChar(usize),
}

pub const KEYWORDS: &[&str] = &[
    "abstract",
    "assert",
    "boolean",
    "break",
    "byte",
    "case",
    "catch",
    "char",
    "class",
    "const",
    "continue",
    "default",
    "do",
    "double",
    "else",
    "enum",
    "extends",
    "final",
    "finally",
    "float",
    "for",
    "goto",
    "if",
    "implements",
    "import",
    "instanceof",
    "int",
    "interface",
    "long",
    "native",
    "new",
    "package",
    "private",
    "protected",
    "public",
    "return",
    "short",
    "static",
    "strictfp",
    "super",
    "switch",
    "synchronized",
    "this",
    "throw",
    "throws",
    "transient",
    "try",
    "void",
    "volatile",
    "while",
    "true",
    "false",
    "null",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

// Longest match first.
const OPERATORS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "...", "->", "::", "++", "--", "&&", "||", "==", "!=", "<=", ">=", "+=", "-=", "*=",
    "/=", "%=", "&=", "|=", "^=", "<<", ">>",
];

pub fn tokenize(src: &str) -> Result<Vec<Token<'_>>, LexError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut line = 1;

    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            line += 1;
            i += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let start_line = line;

        let kind = if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            TokenKind::LineComment
        } else if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i += 2;
            loop {
                if i + 1 >= bytes.len() {
                    return Err(LexError::UnterminatedComment(start_line));
                }
                if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                    i += 2;
                    break;
                }
                if bytes[i] == b'\n' {
                    line += 1;
                }
                i += 1;
            }
            TokenKind::BlockComment
        } else if src[i..].starts_with("\"\"\"") {
            i += 3;
            loop {
                if i >= bytes.len() {
                    return Err(LexError::UnterminatedString(start_line));
                }
                if bytes[i] == b'\\' {
                    i += 2;
                    continue;
                }
                if src[i..].starts_with("\"\"\"") {
                    i += 3;
                    break;
                }
                if bytes[i] == b'\n' {
                    line += 1;
                }
                i += 1;
            }
            TokenKind::Str
        } else if c == b'"' || c == b'\'' {
            i += 1;
            loop {
                match bytes.get(i) {
                    None | Some(b'\n') => {
                        return Err(if c == b'"' {
                            LexError::UnterminatedString(start_line)
                        } else {
                            LexError::UnterminatedChar(start_line)
                        })
                    }
                    Some(b'\\') => i += 2,
                    Some(&b) if b == c => {
                        i += 1;
                        break;
                    }
                    Some(_) => i += 1,
                }
            }
            if c == b'"' {
                TokenKind::Str
            } else {
                TokenKind::Char
            }
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            i += 1;
            while i < bytes.len() {
                let b = bytes[i];
                let exponent_sign = (b == b'+' || b == b'-')
                    && matches!(bytes[i - 1], b'e' | b'E' | b'p' | b'P')
                    && !src[start..i].starts_with("0x")
                    && !src[start..i].starts_with("0X");
                if b.is_ascii_alphanumeric() || b == b'_' || b == b'.' || exponent_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            TokenKind::Number
        } else if is_ident_start(src, i) {
            while i < bytes.len() && is_ident_continue(src, i) {
                i += next_char_len(src, i);
            }
            if is_keyword(&src[start..i]) {
                TokenKind::Keyword
            } else {
                TokenKind::Ident
            }
        } else {
            let rest = &src[i..];
            match OPERATORS.iter().find(|op| rest.starts_with(**op)) {
                Some(op) => i += op.len(),
                None => i += next_char_len(src, i),
            }
            TokenKind::Op
        };

        tokens.push(Token { kind, text: &src[start..i], start, end: i, line: start_line });
    }
    Ok(tokens)
}

/// Tokens with comments removed.
pub fn code_tokens(src: &str) -> Result<Vec<Token<'_>>, LexError> {
    Ok(tokenize(src)?.into_iter().filter(|t| !t.is_comment()).collect())
}

fn next_char_len(src: &str, i: usize) -> usize {
    src[i..].chars().next().map_or(1, char::len_utf8)
}

fn is_ident_start(src: &str, i: usize) -> bool {
    src[i..].chars().next().is_some_and(|ch| ch.is_alphabetic() || ch == '_' || ch == '$')
}

fn is_ident_continue(src: &str, i: usize) -> bool {
    src[i..].chars().next().is_some_and(|ch| ch.is_alphanumeric() || ch == '_' || ch == '$')
}
