//! In-memory representation of flat timed statecharts.
//!
//! Every state and transition carries a [`ComponentId`] that survives edits to
//! its content. Deleted ids are never reused; the chart keeps per-kind
//! counters for that purpose.

mod edit;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsl::SourceSpan;

pub(crate) use edit::{for_each_site, SiteRef};
pub use edit::{apply_edit, apply_patch, ApplyError, Block, Edit, EditParams, Patch, PatchError};
pub use validate::{type_of, validate, Diagnostic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Input,
    Output,
    Local,
}

impl VarKind {
    pub fn keyword(self) -> &'static str {
        match self {
            VarKind::Input => "input",
            VarKind::Output => "output",
            VarKind::Local => "local",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Type {
    Bool,
    Int,
    Real,
}

impl Type {
    pub fn is_numeric(self) -> bool {
        matches!(self, Type::Int | Type::Real)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Type::Bool => "bool",
            Type::Int => "int",
            Type::Real => "real",
        }
    }

    /// Whether a value of type `from` may be stored in a slot of this type.
    pub fn accepts(self, from: Type) -> bool {
        self == from || (self == Type::Real && from == Type::Int)
    }
}

/// A runtime value or literal. Reals follow IEEE-754 binary64 semantics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
}

impl Value {
    pub fn ty(self) -> Type {
        match self {
            Value::Bool(_) => Type::Bool,
            Value::Int(_) => Type::Int,
            Value::Real(_) => Type::Real,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Value::Bool(b) => f64::from(u8::from(b)),
            Value::Int(i) => i as f64,
            Value::Real(r) => r,
        }
    }

    pub fn is_numeric(self) -> bool {
        self.ty().is_numeric()
    }

    /// The zero value of a type, used for locals without an initializer.
    pub fn default_of(ty: Type) -> Value {
        match ty {
            Type::Bool => Value::Bool(false),
            Type::Int => Value::Int(0),
            Type::Real => Value::Real(0.0),
        }
    }

    /// Converts to `ty`, promoting ints to reals. Returns `None` for any other
    /// type change.
    pub fn coerce(self, ty: Type) -> Option<Value> {
        match (self, ty) {
            (v, t) if v.ty() == t => Some(v),
            (Value::Int(i), Type::Real) => Some(Value::Real(i as f64)),
            _ => None,
        }
    }
}

/// Canonical literal spelling: reals always carry a fractional part or an
/// exponent and use the shortest representation that round-trips.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r:?}"),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        crate::dsl::parse_literal(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MathOp {
    #[serde(rename = "+")]
    Add,
    #[serde(rename = "-")]
    Sub,
    #[serde(rename = "*")]
    Mul,
    #[serde(rename = "/")]
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LogicOp {
    #[serde(rename = "&&")]
    And,
    #[serde(rename = "||")]
    Or,
}

impl MathOp {
    pub const ALL: [MathOp; 4] = [MathOp::Add, MathOp::Sub, MathOp::Mul, MathOp::Div];

    pub fn token(self) -> &'static str {
        match self {
            MathOp::Add => "+",
            MathOp::Sub => "-",
            MathOp::Mul => "*",
            MathOp::Div => "/",
        }
    }
}

impl RelOp {
    pub const ALL: [RelOp; 6] = [RelOp::Lt, RelOp::Le, RelOp::Gt, RelOp::Ge, RelOp::Eq, RelOp::Ne];

    pub fn token(self) -> &'static str {
        match self {
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
            RelOp::Eq => "==",
            RelOp::Ne => "!=",
        }
    }

    pub fn is_equality(self) -> bool {
        matches!(self, RelOp::Eq | RelOp::Ne)
    }
}

impl LogicOp {
    pub const ALL: [LogicOp; 2] = [LogicOp::And, LogicOp::Or];

    pub fn token(self) -> &'static str {
        match self {
            LogicOp::And => "&&",
            LogicOp::Or => "||",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Math(MathOp),
    Rel(RelOp),
    Logic(LogicOp),
}

impl BinOp {
    pub fn token(self) -> &'static str {
        match self {
            BinOp::Math(op) => op.token(),
            BinOp::Rel(op) => op.token(),
            BinOp::Logic(op) => op.token(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Sec,
    Msec,
    Usec,
}

impl TimeUnit {
    pub const ALL: [TimeUnit; 3] = [TimeUnit::Sec, TimeUnit::Msec, TimeUnit::Usec];

    pub fn seconds(self) -> f64 {
        match self {
            TimeUnit::Sec => 1.0,
            TimeUnit::Msec => 1e-3,
            TimeUnit::Usec => 1e-6,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            TimeUnit::Sec => "sec",
            TimeUnit::Msec => "msec",
            TimeUnit::Usec => "usec",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Value),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// True once the active state has been occupied for `amount` units.
    After { amount: Value, unit: TimeUnit },
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn contains_after(&self) -> bool {
        match self {
            Expr::After { .. } => true,
            Expr::Lit(_) | Expr::Var(_) => false,
            Expr::Unary(_, e) => e.contains_after(),
            Expr::Binary(_, l, r) => l.contains_after() || r.contains_after(),
        }
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Unary(_, e) => e.walk(f),
            Expr::Binary(_, l, r) => {
                l.walk(f);
                r.walk(f);
            }
            Expr::Lit(_) | Expr::Var(_) | Expr::After { .. } => {}
        }
    }

    /// Pre-order traversal, same order as [`Expr::walk`].
    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        f(self);
        match self {
            Expr::Unary(_, e) => e.walk_mut(f),
            Expr::Binary(_, l, r) => {
                l.walk_mut(f);
                r.walk_mut(f);
            }
            Expr::Lit(_) | Expr::Var(_) | Expr::After { .. } => {}
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::dsl::print_expr(self))
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        crate::dsl::parse_expr(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conjunct {
    /// `None` exactly for the first conjunct of a guard.
    pub connector: Option<LogicOp>,
    pub expr: Expr,
}

/// Transition condition. Conjuncts are combined strictly left to right, with
/// no precedence between `&&` and `||` at this level.
#[derive(Debug, Clone, PartialEq)]
pub struct Guard {
    pub conjuncts: Vec<Conjunct>,
}

impl Guard {
    pub fn single(expr: Expr) -> Guard {
        Guard { conjuncts: vec![Conjunct { connector: None, expr }] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub target: String,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub kind: VarKind,
    pub ty: Type,
    pub init: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    State,
    Transition,
}

/// Stable identity of a state or transition. Displayed as `s<n>` / `t<n>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComponentId {
    pub kind: ComponentKind,
    pub index: u32,
}

impl ComponentId {
    pub fn state(index: u32) -> Self {
        ComponentId { kind: ComponentKind::State, index }
    }

    pub fn transition(index: u32) -> Self {
        ComponentId { kind: ComponentKind::Transition, index }
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.kind {
            ComponentKind::State => 's',
            ComponentKind::Transition => 't',
        };
        write!(f, "{prefix}{}", self.index)
    }
}

impl FromStr for ComponentId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s.chars().next() {
            Some('s') => ComponentKind::State,
            Some('t') => ComponentKind::Transition,
            _ => return Err(format!("invalid component id `{s}`")),
        };
        let index = s[1..].parse().map_err(|_| format!("invalid component id `{s}`"))?;
        Ok(ComponentId { kind, index })
    }
}

impl Serialize for ComponentId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ComponentId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub id: ComponentId,
    pub name: String,
    pub entry: Vec<Assignment>,
    pub during: Vec<Assignment>,
}

impl State {
    pub fn assignments(&self) -> impl Iterator<Item = &Assignment> {
        self.entry.iter().chain(self.during.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Initial,
    State(ComponentId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub id: ComponentId,
    pub source: Source,
    pub dest: ComponentId,
    /// Absent only on the initial transition.
    pub guard: Option<Guard>,
}

impl Transition {
    pub fn is_initial(&self) -> bool {
        self.source == Source::Initial
    }
}

/// What a diagnostic or span refers to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subject {
    Chart,
    Var(String),
    Component(ComponentId),
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub name: String,
    pub vars: Vec<VarDecl>,
    pub states: Vec<State>,
    pub transitions: Vec<Transition>,
    pub(crate) next_state: u32,
    pub(crate) next_transition: u32,
    /// Source locations recorded by the parser. Not part of chart equality.
    pub spans: BTreeMap<Subject, SourceSpan>,
}

impl PartialEq for Chart {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.vars == other.vars
            && self.states == other.states
            && self.transitions == other.transitions
    }
}

impl Chart {
    pub fn new(name: impl Into<String>) -> Self {
        Chart {
            name: name.into(),
            vars: Vec::new(),
            states: Vec::new(),
            transitions: Vec::new(),
            next_state: 0,
            next_transition: 0,
            spans: BTreeMap::new(),
        }
    }

    pub fn declare(&mut self, name: &str, kind: VarKind, ty: Type, init: Option<Value>) {
        self.vars.push(VarDecl { name: name.to_string(), kind, ty, init });
    }

    /// Appends a state with a fresh id.
    pub fn add_state(&mut self, name: &str, entry: Vec<Assignment>, during: Vec<Assignment>) -> ComponentId {
        let id = ComponentId::state(self.next_state);
        self.next_state += 1;
        self.states.push(State { id, name: name.to_string(), entry, during });
        id
    }

    /// Appends a transition with a fresh id.
    pub fn add_transition(&mut self, source: Source, dest: ComponentId, guard: Option<Guard>) -> ComponentId {
        let id = ComponentId::transition(self.next_transition);
        self.next_transition += 1;
        self.transitions.push(Transition { id, source, dest, guard });
        id
    }

    pub fn var(&self, name: &str) -> Option<&VarDecl> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub fn vars_of(&self, kind: VarKind) -> impl Iterator<Item = &VarDecl> {
        self.vars.iter().filter(move |v| v.kind == kind)
    }

    pub fn state(&self, id: ComponentId) -> Option<&State> {
        self.states.iter().find(|s| s.id == id)
    }

    pub fn state_mut(&mut self, id: ComponentId) -> Option<&mut State> {
        self.states.iter_mut().find(|s| s.id == id)
    }

    pub fn state_by_name(&self, name: &str) -> Option<&State> {
        self.states.iter().find(|s| s.name == name)
    }

    pub fn transition(&self, id: ComponentId) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.id == id)
    }

    pub fn transition_mut(&mut self, id: ComponentId) -> Option<&mut Transition> {
        self.transitions.iter_mut().find(|t| t.id == id)
    }

    pub fn initial(&self) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.is_initial())
    }

    pub fn contains(&self, id: ComponentId) -> bool {
        match id.kind {
            ComponentKind::State => self.state(id).is_some(),
            ComponentKind::Transition => self.transition(id).is_some(),
        }
    }

    /// States in declaration order, then transitions in declaration order.
    pub fn components(&self) -> Vec<(ComponentId, ComponentKind)> {
        self.states
            .iter()
            .map(|s| (s.id, ComponentKind::State))
            .chain(self.transitions.iter().map(|t| (t.id, ComponentKind::Transition)))
            .collect()
    }

    /// Short human label, e.g. `CLOSE_NORM` or `CLOSE_NORM -> OPEN`.
    pub fn label(&self, id: ComponentId) -> String {
        let name = |sid: ComponentId| self.state(sid).map_or_else(|| sid.to_string(), |s| s.name.clone());
        match id.kind {
            ComponentKind::State => name(id),
            ComponentKind::Transition => match self.transition(id) {
                Some(t) => {
                    let src = match t.source {
                        Source::Initial => "initial".to_string(),
                        Source::State(s) => name(s),
                    };
                    format!("{src} -> {}", name(t.dest))
                }
                None => id.to_string(),
            },
        }
    }

    /// Every numeric literal appearing in expressions and initializers, in
    /// first-appearance order, without duplicates. Timer amounts are excluded.
    pub fn numeric_constants(&self) -> Vec<Value> {
        let mut out: Vec<Value> = Vec::new();
        let mut push = |v: Value| {
            if v.is_numeric() && !out.contains(&v) {
                out.push(v);
            }
        };
        for v in &self.vars {
            if let Some(init) = v.init {
                push(init);
            }
        }
        let mut visit = |e: &Expr| {
            e.walk(&mut |node| {
                if let Expr::Lit(v) = node {
                    push(*v);
                }
            })
        };
        for s in &self.states {
            for a in s.assignments() {
                visit(&a.value);
            }
        }
        for t in &self.transitions {
            if let Some(g) = &t.guard {
                for c in &g.conjuncts {
                    visit(&c.expr);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_id_text_roundtrip() {
        for id in [ComponentId::state(0), ComponentId::transition(17)] {
            assert_eq!(id.to_string().parse::<ComponentId>().unwrap(), id);
        }
        assert!("x3".parse::<ComponentId>().is_err());
        assert!("s".parse::<ComponentId>().is_err());
    }

    #[test]
    fn real_literals_print_with_fraction() {
        assert_eq!(Value::Real(1.0).to_string(), "1.0");
        assert_eq!(Value::Real(0.10000000000000001).to_string(), "0.1");
        assert_eq!(Value::Int(-3).to_string(), "-3");
    }

    #[test]
    fn components_are_states_then_transitions() {
        let mut c = Chart::new("M");
        let a = c.add_state("A", vec![], vec![]);
        c.add_transition(Source::Initial, a, None);
        let b = c.add_state("B", vec![], vec![]);
        let got: Vec<_> = c.components().into_iter().map(|(id, _)| id.to_string()).collect();
        assert_eq!(got, ["s0", "s1", "t0"]);
        assert_eq!(c.label(ComponentId::transition(0)), "initial -> A");
        assert!(c.contains(b));
    }
}
