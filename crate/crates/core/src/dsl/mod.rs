//! Text front-end for charts: parsing, canonical serialization and patch diffs.
//!
//! The grammar is documented in `docs/grammar.md`.

mod diff;
mod lexer;
mod parser;
mod printer;

use std::fmt;
use std::path::Path;

use crate::model::{validate, Chart, Expr, Subject, Value};

pub use diff::render_diff;
pub use printer::{print_expr, serialize};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceSpan {
    pub file: Option<String>,
    /// 1-based.
    pub line: u32,
    /// 1-based, in characters.
    pub column: u32,
    pub length: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub span: SourceSpan,
    pub message: String,
}

impl Diagnostic {
    pub(crate) fn error(span: SourceSpan, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Error, span, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        let file = self.span.file.as_deref().unwrap_or("<input>");
        write!(f, "{file}:{}:{}: {sev}: {}", self.span.line, self.span.column, self.message)
    }
}

/// Parses and validates a chart. Reports the first syntax error, or every
/// validation problem.
pub fn parse(text: &str) -> Result<Chart, Vec<Diagnostic>> {
    parse_named(text, None)
}

pub fn parse_file(path: &Path) -> Result<Chart, Vec<Diagnostic>> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![Diagnostic::error(SourceSpan { file: Some(name.clone()), line: 1, column: 1, length: 1 }, e.to_string())]
    })?;
    parse_named(&text, Some(&name))
}

fn parse_named(text: &str, file: Option<&str>) -> Result<Chart, Vec<Diagnostic>> {
    let chart = parser::Parser::new(text, file).and_then(|mut p| p.chart()).map_err(|d| vec![d])?;
    let problems = validate(&chart);
    if problems.is_empty() {
        return Ok(chart);
    }
    let fallback = chart.spans.get(&Subject::Chart).cloned().unwrap_or_default();
    Err(problems
        .into_iter()
        .map(|d| {
            let span = chart.spans.get(&d.subject).cloned().unwrap_or_else(|| fallback.clone());
            Diagnostic::error(span, d.to_string())
        })
        .collect())
}

/// Parses a standalone expression, e.g. `x > 1.0 && !door`.
pub fn parse_expr(text: &str) -> Result<Expr, Diagnostic> {
    let mut p = parser::Parser::new(text, None)?;
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

/// Parses a literal such as `true`, `-3` or `2.5`.
pub fn parse_literal(text: &str) -> Result<Value, Diagnostic> {
    let mut p = parser::Parser::new(text, None)?;
    let v = p.literal()?;
    p.expect_eof()?;
    Ok(v)
}
