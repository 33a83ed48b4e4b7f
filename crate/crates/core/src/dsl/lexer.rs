use super::{Diagnostic, SourceSpan};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i128),
    Real(f64),
    Kw(&'static str),
    Punct(&'static str),
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Real(r) => format!("`{r:?}`"),
            Tok::Kw(k) | Tok::Punct(k) => format!("`{k}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

const KEYWORDS: &[&str] = &[
    "chart", "input", "output", "local", "bool", "int", "real", "state", "entry", "during", "initial",
    "transition", "when", "after", "true", "false", "sec", "msec", "usec",
];

// Longest first so that `<=` wins over `<`.
const PUNCT: &[&str] = &[
    "->", "<=", ">=", "==", "!=", "&&", "||", "{", "}", "(", ")", "[", "]", ";", ":", ",", "=", "+", "-", "*", "/",
    "<", ">", "!",
];

pub(crate) fn lex(text: &str, file: Option<&str>) -> Result<Vec<Token>, Diagnostic> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut line_start = 0usize;
    let span = |start: usize, end: usize, line: u32, line_start: usize| SourceSpan {
        file: file.map(str::to_string),
        line,
        column: (text[line_start..start].chars().count() + 1) as u32,
        length: text[start..end].chars().count().max(1) as u32,
    };

    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            i += 1;
            line += 1;
            line_start = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if text[i..].starts_with("//") {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &text[start..i];
            let tok = match KEYWORDS.iter().find(|k| **k == word) {
                Some(k) => Tok::Kw(k),
                None => Tok::Ident(word.to_string()),
            };
            tokens.push(Token { tok, span: span(start, i, line, line_start) });
            continue;
        }
        if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_real = false;
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                is_real = true;
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
                    is_real = true;
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let sp = span(start, i, line, line_start);
            let lexeme = &text[start..i];
            let tok = if is_real {
                Tok::Real(lexeme.parse().map_err(|_| Diagnostic::error(sp.clone(), "malformed number"))?)
            } else {
                Tok::Int(lexeme.parse().map_err(|_| Diagnostic::error(sp.clone(), "integer literal out of range"))?)
            };
            tokens.push(Token { tok, span: sp });
            continue;
        }
        match PUNCT.iter().find(|p| text[i..].starts_with(**p)) {
            Some(p) => {
                i += p.len();
                tokens.push(Token { tok: Tok::Punct(p), span: span(start, i, line, line_start) });
            }
            None => {
                let ch = text[i..].chars().next().unwrap_or('?');
                let end = i + ch.len_utf8();
                return Err(Diagnostic::error(span(start, end, line, line_start), format!("unexpected character `{ch}`")));
            }
        }
    }
    let eof = SourceSpan { file: file.map(str::to_string), line, column: (text[line_start..].chars().count() + 1) as u32, length: 1 };
    tokens.push(Token { tok: Tok::Eof, span: eof });
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        lex(s, None).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn numbers() {
        assert_eq!(toks("12 1.5 1e21 2.5e-3 7e"), vec![
            Tok::Int(12),
            Tok::Real(1.5),
            Tok::Real(1e21),
            Tok::Real(2.5e-3),
            Tok::Int(7),
            Tok::Ident("e".into()),
            Tok::Eof
        ]);
    }

    #[test]
    fn operators_and_comments() {
        assert_eq!(toks("a<=b // hi\n->!x"), vec![
            Tok::Ident("a".into()),
            Tok::Punct("<="),
            Tok::Ident("b".into()),
            Tok::Punct("->"),
            Tok::Punct("!"),
            Tok::Ident("x".into()),
            Tok::Eof
        ]);
    }

    #[test]
    fn spans_are_one_based() {
        let t = lex("chart\n  foo", None).unwrap();
        assert_eq!((t[1].span.line, t[1].span.column, t[1].span.length), (2, 3, 3));
    }

    #[test]
    fn bad_character() {
        let e = lex("a @ b", None).unwrap_err();
        assert_eq!(e.span.column, 3);
    }
}
