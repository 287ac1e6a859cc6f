//! Method extraction for brace-delimited C-family sources.
//!
//! Only methods and constructors declared directly in a type body are
//! reported. Bodies are matched by brace depth, anything inside a body
//! (lambdas, anonymous classes, local classes) belongs to the enclosing
//! method.

use serde::{Deserialize, Serialize};

use crate::lexer::{code_tokens, LexError, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    #[default]
    Java,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParserConfig {
    pub language: Language,
    /// File extensions (without the dot) handed to the parser.
    pub extensions: Vec<String>,
}

impl Default for ParserConfig {
    fn default() -> Self {
        Self { language: Language::Java, extensions: vec!["java".to_string()] }
    }
}

impl ParserConfig {
    pub fn accepts(&self, path: &str) -> bool {
        path.rsplit_once('.').is_some_and(|(_, ext)| self.extensions.iter().any(|e| e == ext))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedMethod {
    /// `Outer.Inner.name(Type1,Type2)`
    pub signature: String,
    pub name: String,
    pub source: String,
    pub start_line: usize,
    pub end_line: usize,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("unbalanced '{0}' opened on line {1}")]
    Unbalanced(&'static str, usize),
    #[error("unexpected '}}' on line {0}")]
    StrayClose(usize),
}

const TYPE_KEYWORDS: &[&str] = &["class", "interface", "enum", "record"];

const MODIFIERS: &[&str] = &[
    "public",
    "protected",
    "private",
    "static",
    "final",
    "abstract",
    "synchronized",
    "native",
    "strictfp",
    "default",
    "transient",
    "volatile",
];

pub fn extract_methods(src: &str, cfg: &ParserConfig) -> Result<Vec<ExtractedMethod>, ParseError> {
    match cfg.language {
        Language::Java => extract_java(src),
    }
}

fn extract_java(src: &str) -> Result<Vec<ExtractedMethod>, ParseError> {
    let tokens = code_tokens(src)?;
    let mut methods: Vec<ExtractedMethod> = Vec::new();
    // `None` marks file scope; `Some(name)` a type body.
    let mut scopes: Vec<Option<String>> = vec![None];
    let mut header_start = 0;
    let mut paren_depth = 0usize;
    let mut i = 0;

    while i < tokens.len() {
        let tok = &tokens[i];
        if tok.kind != TokenKind::Op {
            i += 1;
            continue;
        }
        match tok.text {
            "(" => paren_depth += 1,
            ")" => paren_depth = paren_depth.saturating_sub(1),
            ";" if paren_depth == 0 => header_start = i + 1,
            "}" => {
                if scopes.len() == 1 {
                    return Err(ParseError::StrayClose(tok.line));
                }
                scopes.pop();
                header_start = i + 1;
                paren_depth = 0;
            }
            "{" if paren_depth > 0 => {
                // Array-valued annotation arguments and the like.
                i = matching_brace(&tokens, i)? + 1;
                continue;
            }
            "{" => {
                let header = &tokens[header_start.min(i)..i];
                if let Some(name) = declared_type_name(header) {
                    scopes.push(Some(name));
                    header_start = i + 1;
                } else {
                    let close = matching_brace(&tokens, i)?;
                    let in_type = scopes.last().is_some_and(Option::is_some);
                    let enclosing: Vec<&str> = scopes.iter().flatten().map(String::as_str).collect();
                    match in_type.then(|| method_header(header, enclosing.last().copied())) {
                        Some(Some((name, params))) => {
                            let first = &header[0];
                            let last = &tokens[close];
                            let start = line_start_if_indented(src, first.start);
                            let signature = format!("{}.{}({})", enclosing.join("."), name, params.join(","));
                            if methods.iter().any(|m| m.signature == signature) {
                                tracing::warn!(%signature, "duplicate method signature, keeping first");
                            } else {
                                methods.push(ExtractedMethod {
                                    signature,
                                    name,
                                    source: src[start..last.end].to_string(),
                                    start_line: first.line,
                                    end_line: last.line,
                                });
                            }
                            header_start = close + 1;
                        }
                        _ => {
                            // Initializer blocks start a fresh member; field
                            // initializers run on until their ';'.
                            if !has_top_level_assign(header) {
                                header_start = close + 1;
                            }
                        }
                    }
                    i = close + 1;
                    continue;
                }
            }
            _ => {}
        }
        i += 1;
    }

    if scopes.len() > 1 {
        return Err(ParseError::Unbalanced("{", tokens.last().map_or(0, |t| t.line)));
    }
    Ok(methods)
}

fn matching_brace(tokens: &[Token<'_>], open: usize) -> Result<usize, ParseError> {
    let mut depth = 0usize;
    for (j, t) in tokens.iter().enumerate().skip(open) {
        if t.is_op("{") {
            depth += 1;
        } else if t.is_op("}") {
            depth -= 1;
            if depth == 0 {
                return Ok(j);
            }
        }
    }
    Err(ParseError::Unbalanced("{", tokens[open].line))
}

fn line_start_if_indented(src: &str, pos: usize) -> usize {
    let line_start = src[..pos].rfind('\n').map_or(0, |p| p + 1);
    if src[line_start..pos].chars().all(char::is_whitespace) {
        line_start
    } else {
        pos
    }
}

fn declared_type_name(header: &[Token<'_>]) -> Option<String> {
    let mut depth = 0i32;
    for (k, t) in header.iter().enumerate() {
        match t.text {
            "(" => depth += 1,
            ")" => depth -= 1,
            _ => {}
        }
        if depth != 0 || !TYPE_KEYWORDS.contains(&t.text) {
            continue;
        }
        // `record` and friends are contextual; `Foo.class` is an expression.
        if k > 0 && header[k - 1].is_op(".") {
            continue;
        }
        if t.kind == TokenKind::Keyword || t.text == "record" {
            // `record` is contextual: require a component list.
            if t.text == "record" && !header.get(k + 2).is_some_and(|n| n.is_op("(")) {
                continue;
            }
            if let Some(next) = header.get(k + 1) {
                if next.kind == TokenKind::Ident {
                    return Some(next.text.to_string());
                }
            }
        }
    }
    None
}

fn has_top_level_assign(header: &[Token<'_>]) -> bool {
    let mut depth = 0i32;
    header.iter().any(|t| {
        match t.text {
            "(" | "[" => depth += 1,
            ")" | "]" => depth -= 1,
            _ => {}
        }
        depth == 0 && t.is_op("=")
    })
}

/// Returns the method name and normalized parameter types when `header`
/// declares a method or constructor.
fn method_header(header: &[Token<'_>], enclosing: Option<&str>) -> Option<(String, Vec<String>)> {
    if header.is_empty() || has_top_level_assign(header) {
        return None;
    }
    let mut end = header.len();
    let mut depth = 0i32;
    for (k, t) in header.iter().enumerate() {
        match t.text {
            "(" => depth += 1,
            ")" => depth -= 1,
            _ => {}
        }
        if depth == 0 && t.is_keyword("throws") {
            end = k;
            break;
        }
    }
    let core = &header[..end];
    let close = core.len().checked_sub(1)?;
    if !core[close].is_op(")") {
        return None;
    }
    let mut depth = 0i32;
    let mut open = None;
    for k in (0..=close).rev() {
        match core[k].text {
            ")" => depth += 1,
            "(" => {
                depth -= 1;
                if depth == 0 {
                    open = Some(k);
                    break;
                }
            }
            _ => {}
        }
    }
    let open = open?;
    let name_idx = open.checked_sub(1)?;
    let name_tok = &core[name_idx];
    if name_tok.kind != TokenKind::Ident {
        return None;
    }
    if name_idx > 0 && (core[name_idx - 1].is_keyword("new") || core[name_idx - 1].is_op(".")) {
        return None;
    }

    let prefix = strip_annotations(&core[..name_idx]);
    let has_return_type = prefix.iter().any(|t| !(t.kind == TokenKind::Keyword && MODIFIERS.contains(&t.text)));
    if !has_return_type && Some(name_tok.text) != enclosing {
        return None;
    }

    let params = parameter_types(&core[open + 1..close])?;
    Some((name_tok.text.to_string(), params))
}

fn strip_annotations<'a, 'b>(tokens: &'b [Token<'a>]) -> Vec<&'b Token<'a>> {
    let mut out = Vec::new();
    let mut k = 0;
    while k < tokens.len() {
        if tokens[k].is_op("@") && tokens.get(k + 1).is_some_and(|t| t.kind == TokenKind::Ident) {
            k += 2;
            while k + 1 < tokens.len() && tokens[k].is_op(".") && tokens[k + 1].kind == TokenKind::Ident {
                k += 2;
            }
            if k < tokens.len() && tokens[k].is_op("(") {
                let mut depth = 0i32;
                while k < tokens.len() {
                    match tokens[k].text {
                        "(" => depth += 1,
                        ")" => depth -= 1,
                        _ => {}
                    }
                    k += 1;
                    if depth == 0 {
                        break;
                    }
                }
            }
            continue;
        }
        out.push(&tokens[k]);
        k += 1;
    }
    out
}

fn join_type_tokens(tokens: &[&Token<'_>]) -> String {
    let wordy = |t: &Token<'_>| matches!(t.kind, TokenKind::Ident | TokenKind::Keyword | TokenKind::Number);
    let mut out = String::new();
    for (k, t) in tokens.iter().enumerate() {
        if k > 0 {
            let prev = tokens[k - 1];
            let spaced = (wordy(prev) && wordy(t))
                || (prev.is_op("?") && t.kind == TokenKind::Keyword)
                || (t.is_op("?") && prev.kind == TokenKind::Keyword);
            if spaced {
                out.push(' ');
            }
        }
        out.push_str(t.text);
    }
    out
}

fn parameter_types(tokens: &[Token<'_>]) -> Option<Vec<String>> {
    let mut params: Vec<Vec<&Token<'_>>> = vec![Vec::new()];
    let mut depth = 0i32;
    for t in tokens {
        match t.text {
            "(" | "<" | "[" => depth += 1,
            ")" | ">" | "]" => depth -= 1,
            ">>" => depth -= 2,
            ">>>" => depth -= 3,
            "," if depth == 0 => {
                params.push(Vec::new());
                continue;
            }
            _ => {}
        }
        params.last_mut().expect("non-empty").push(t);
    }
    if tokens.is_empty() {
        return Some(Vec::new());
    }

    let mut types = Vec::new();
    for param in params {
        let owned: Vec<Token<'_>> = param.into_iter().cloned().collect();
        let cleaned: Vec<&Token<'_>> =
            strip_annotations(&owned).into_iter().filter(|t| !t.is_keyword("final")).collect();
        let mut end = cleaned.len();
        let mut dims = String::new();
        while end >= 2 && cleaned[end - 1].is_op("]") && cleaned[end - 2].is_op("[") {
            dims.push_str("[]");
            end -= 2;
        }
        if end < 2 {
            return None;
        }
        let name = cleaned[end - 1];
        if !(name.kind == TokenKind::Ident || name.is_keyword("this")) {
            return None;
        }
        if name.is_keyword("this") {
            continue;
        }
        let ty = join_type_tokens(&cleaned[..end - 1]);
        types.push(format!("{ty}{dims}"));
    }
    Some(types)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigs(src: &str) -> Vec<String> {
        extract_methods(src, &ParserConfig::default()).unwrap().into_iter().map(|m| m.signature).collect()
    }

    #[test]
    fn finds_methods_and_constructors() {
        let src = r#"
package p;
import java.util.*;

/** Doc. */
public class Foo extends Bar implements Baz {
    private int x = 1;
    private final Map<String, List<Integer>> m = new HashMap<>();

    public Foo(int x) { this.x = x; }

    @Override
    public String toString() {
        return "Foo{" + x + "}";
    }

    static <T extends Comparable<T>> T max(final List<? extends T> xs, @Nullable T d) throws IOException {
        return d;
    }

    abstract void noBody(int a);

    void arrays(String... args, int m[][]) {}
}
"#;
        assert_eq!(
            sigs(src),
            vec!["Foo.Foo(int)", "Foo.toString()", "Foo.max(List<? extends T>,T)", "Foo.arrays(String...,int[][])",]
        );
    }

    #[test]
    fn method_source_spans_annotations_to_closing_brace() {
        let src = "class A {\n    // note\n    @Deprecated\n    int f() {\n        return 1;\n    }\n}\n";
        let m = &extract_methods(src, &ParserConfig::default()).unwrap()[0];
        assert_eq!(m.source, "    @Deprecated\n    int f() {\n        return 1;\n    }");
        assert_eq!((m.start_line, m.end_line), (3, 6));
    }

    #[test]
    fn nested_types_are_qualified() {
        let src = "class A { void f() {} static class B { void f() {} } interface C { default void g() {} } }";
        assert_eq!(sigs(src), vec!["A.f()", "A.B.f()", "A.C.g()"]);
    }

    #[test]
    fn ignores_bodies_inside_methods_and_initializers() {
        let src = r#"
class A {
    static { init(); }
    { instanceInit(); }
    Runnable r = new Runnable() { public void run() {} };
    int[] xs = {1, 2, 3};
    void f() {
        new Thread(() -> { work(); }).start();
        Object o = new Object() { void inner() {} };
        if (x) { y(); }
    }
    @SuppressWarnings({"a", "b"})
    void g() {}
}
"#;
        assert_eq!(sigs(src), vec!["A.f()", "A.g()"]);
    }

    #[test]
    fn enums_and_records() {
        let src = r#"
enum Color {
    RED(1), GREEN(2) { int code() { return 9; } }, BLUE(3);
    private final int c;
    Color(int c) { this.c = c; }
    int code() { return c; }
}
record Point(int x, int y) {
    Point { check(x); }
    int sum() { return x + y; }
}
"#;
        assert_eq!(sigs(src), vec!["Color.Color(int)", "Color.code()", "Point.sum()"]);
    }

    #[test]
    fn strings_with_braces_do_not_confuse_matching() {
        let src = "class A { String f() { return \"}{\"; } char g() { return '}'; } }";
        assert_eq!(sigs(src), vec!["A.f()", "A.g()"]);
    }

    #[test]
    fn unbalanced_braces_fail() {
        let err = extract_methods("class A { void f() { ", &ParserConfig::default()).unwrap_err();
        assert!(matches!(err, ParseError::Unbalanced(..)));
        assert!(extract_methods("class A { } }", &ParserConfig::default()).is_err());
    }

    #[test]
    fn accepts_configured_extensions() {
        let cfg = ParserConfig::default();
        assert!(cfg.accepts("src/a/B.java"));
        assert!(!cfg.accepts("README.md"));
        assert!(!cfg.accepts("java"));
    }
}
