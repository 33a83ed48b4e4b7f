use std::collections::HashMap;

use super::lexer::{lex, Tok, Token};
use super::{Diagnostic, SourceSpan};
use crate::model::{
    Assignment, BinOp, Chart, ComponentId, Conjunct, Expr, Guard, LogicOp, MathOp, RelOp, Source, Subject, TimeUnit,
    Type, UnaryOp, Value, VarKind,
};

type PResult<T> = Result<T, Diagnostic>;

pub(crate) struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

struct PendingTransition {
    source: Option<(String, SourceSpan)>,
    dest: (String, SourceSpan),
    guard: Option<Guard>,
    span: SourceSpan,
}

impl Parser {
    pub(crate) fn new(text: &str, file: Option<&str>) -> PResult<Self> {
        Ok(Parser { tokens: lex(text, file)?, pos: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> SourceSpan {
        self.tokens[self.pos].span.clone()
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, what: &str) -> Diagnostic {
        Diagnostic::error(self.span(), format!("expected {what}, found {}", self.peek().describe()))
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Kw(q) if *q == k)
    }

    fn expect_punct(&mut self, p: &str) -> PResult<SourceSpan> {
        if self.is_punct(p) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&format!("`{p}`")))
        }
    }

    fn expect_kw(&mut self, k: &str) -> PResult<SourceSpan> {
        if self.is_kw(k) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&format!("`{k}`")))
        }
    }

    fn ident(&mut self) -> PResult<(String, SourceSpan)> {
        match self.peek().clone() {
            Tok::Ident(name) => Ok((name, self.bump().span)),
            _ => Err(self.unexpected("identifier")),
        }
    }

    pub(crate) fn expect_eof(&self) -> PResult<()> {
        match self.peek() {
            Tok::Eof => Ok(()),
            _ => Err(self.unexpected("end of input")),
        }
    }

    pub(crate) fn chart(&mut self) -> PResult<Chart> {
        let chart_span = self.expect_kw("chart")?;
        let (name, _) = self.ident()?;
        let mut chart = Chart::new(name);
        chart.spans.insert(Subject::Chart, chart_span);
        self.expect_punct("{")?;

        while let Tok::Kw(k @ ("input" | "output" | "local")) = self.peek() {
            let kind = match *k {
                "input" => VarKind::Input,
                "output" => VarKind::Output,
                _ => VarKind::Local,
            };
            self.bump();
            let (vname, vspan) = self.ident()?;
            self.expect_punct(":")?;
            let ty = self.ty()?;
            let init = if self.is_punct("=") {
                self.bump();
                let lit_span = self.span();
                let lit = self.literal()?;
                Some(lit.coerce(ty).ok_or_else(|| {
                    Diagnostic::error(lit_span, format!("initial value is not of type {}", ty.keyword()))
                })?)
            } else {
                None
            };
            self.expect_punct(";")?;
            chart.spans.insert(Subject::Var(vname.clone()), vspan);
            chart.declare(&vname, kind, ty, init);
        }

        while self.is_kw("state") {
            self.bump();
            let (sname, sspan) = self.ident()?;
            self.expect_punct("{")?;
            let mut entry = Vec::new();
            let mut during = Vec::new();
            if self.is_kw("entry") {
                self.bump();
                entry = self.block()?;
            }
            if self.is_kw("during") {
                self.bump();
                during = self.block()?;
            }
            self.expect_punct("}")?;
            let id = chart.add_state(&sname, entry, during);
            chart.spans.insert(Subject::Component(id), sspan);
        }

        let mut pending = Vec::new();
        loop {
            if self.is_kw("initial") {
                let span = self.bump().span;
                self.expect_punct("->")?;
                let dest = self.ident()?;
                self.expect_punct(";")?;
                pending.push(PendingTransition { source: None, dest, guard: None, span });
            } else if self.is_kw("transition") {
                let span = self.bump().span;
                let source = self.ident()?;
                self.expect_punct("->")?;
                let dest = self.ident()?;
                self.expect_kw("when")?;
                self.expect_punct("[")?;
                let guard = self.guard()?;
                self.expect_punct("]")?;
                self.expect_punct(";")?;
                pending.push(PendingTransition { source: Some(source), dest, guard: Some(guard), span });
            } else {
                break;
            }
        }
        if !self.is_punct("}") {
            return Err(self.unexpected("`state`, `initial`, `transition` or `}`"));
        }
        self.bump();
        self.expect_eof()?;

        let mut by_name: HashMap<String, ComponentId> = HashMap::new();
        for s in &chart.states {
            by_name.entry(s.name.clone()).or_insert(s.id);
        }
        let resolve = |(name, span): &(String, SourceSpan), role: &str| {
            by_name
                .get(name)
                .copied()
                .ok_or_else(|| Diagnostic::error(span.clone(), format!("unknown {role} state `{name}`")))
        };
        for p in pending {
            let source = match &p.source {
                None => Source::Initial,
                Some(s) => Source::State(resolve(s, "source")?),
            };
            let dest = resolve(&p.dest, "dest")?;
            let id = chart.add_transition(source, dest, p.guard);
            chart.spans.insert(Subject::Component(id), p.span);
        }
        Ok(chart)
    }

    fn ty(&mut self) -> PResult<Type> {
        let ty = match self.peek() {
            Tok::Kw("bool") => Type::Bool,
            Tok::Kw("int") => Type::Int,
            Tok::Kw("real") => Type::Real,
            _ => return Err(self.unexpected("type (`bool`, `int` or `real`)")),
        };
        self.bump();
        Ok(ty)
    }

    pub(crate) fn literal(&mut self) -> PResult<Value> {
        let negative = self.is_punct("-");
        if negative {
            self.bump();
        }
        let span = self.span();
        let v = match self.peek().clone() {
            Tok::Kw("true") if !negative => Value::Bool(true),
            Tok::Kw("false") if !negative => Value::Bool(false),
            Tok::Int(i) => int_value(if negative { -i } else { i }, span)?,
            Tok::Real(r) => Value::Real(if negative { -r } else { r }),
            _ => return Err(self.unexpected("literal")),
        };
        self.bump();
        Ok(v)
    }

    fn block(&mut self) -> PResult<Vec<Assignment>> {
        self.expect_punct("{")?;
        let mut out = Vec::new();
        while !self.is_punct("}") {
            let (target, _) = self.ident()?;
            self.expect_punct("=")?;
            let value = self.expr()?;
            self.expect_punct(";")?;
            out.push(Assignment { target, value });
        }
        self.bump();
        Ok(out)
    }

    fn guard(&mut self) -> PResult<Guard> {
        let mut conjuncts = vec![Conjunct { connector: None, expr: self.equality()? }];
        loop {
            let connector = match self.peek() {
                Tok::Punct("&&") => LogicOp::And,
                Tok::Punct("||") => LogicOp::Or,
                _ => break,
            };
            self.bump();
            conjuncts.push(Conjunct { connector: Some(connector), expr: self.equality()? });
        }
        Ok(Guard { conjuncts })
    }

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        self.or()
    }

    fn or(&mut self) -> PResult<Expr> {
        let mut lhs = self.and()?;
        while self.is_punct("||") {
            self.bump();
            lhs = Expr::binary(BinOp::Logic(LogicOp::Or), lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> PResult<Expr> {
        let mut lhs = self.equality()?;
        while self.is_punct("&&") {
            self.bump();
            lhs = Expr::binary(BinOp::Logic(LogicOp::And), lhs, self.equality()?);
        }
        Ok(lhs)
    }

    fn equality(&mut self) -> PResult<Expr> {
        let mut lhs = self.relational()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("==") => RelOp::Eq,
                Tok::Punct("!=") => RelOp::Ne,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(BinOp::Rel(op), lhs, self.relational()?);
        }
    }

    fn relational(&mut self) -> PResult<Expr> {
        let mut lhs = self.additive()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("<") => RelOp::Lt,
                Tok::Punct("<=") => RelOp::Le,
                Tok::Punct(">") => RelOp::Gt,
                Tok::Punct(">=") => RelOp::Ge,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(BinOp::Rel(op), lhs, self.additive()?);
        }
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("+") => MathOp::Add,
                Tok::Punct("-") => MathOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(BinOp::Math(op), lhs, self.multiplicative()?);
        }
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("*") => MathOp::Mul,
                Tok::Punct("/") => MathOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(BinOp::Math(op), lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        match self.peek() {
            // A minus directly before a number is part of the literal.
            Tok::Punct("-") if matches!(self.peek_at(1), Tok::Int(_) | Tok::Real(_)) => Ok(Expr::Lit(self.literal()?)),
            Tok::Punct("-") => {
                self.bump();
                Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary()?)))
            }
            Tok::Punct("!") => {
                self.bump();
                Ok(Expr::Unary(UnaryOp::Not, Box::new(self.unary()?)))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(_) | Tok::Real(_) | Tok::Kw("true") | Tok::Kw("false") => Ok(Expr::Lit(self.literal()?)),
            Tok::Ident(name) => {
                self.bump();
                Ok(Expr::Var(name))
            }
            Tok::Kw("after") => {
                self.bump();
                self.expect_punct("(")?;
                let span = self.span();
                let amount = self.literal()?;
                if !amount.is_numeric() {
                    return Err(Diagnostic::error(span, "after(...) expects a numeric amount"));
                }
                self.expect_punct(",")?;
                let unit = match self.peek() {
                    Tok::Kw("sec") => TimeUnit::Sec,
                    Tok::Kw("msec") => TimeUnit::Msec,
                    Tok::Kw("usec") => TimeUnit::Usec,
                    _ => return Err(self.unexpected("time unit (`sec`, `msec` or `usec`)")),
                };
                self.bump();
                self.expect_punct(")")?;
                Ok(Expr::After { amount, unit })
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}

fn int_value(i: i128, span: SourceSpan) -> PResult<Value> {
    i64::try_from(i).map(Value::Int).map_err(|_| Diagnostic::error(span, "integer literal out of range"))
}
