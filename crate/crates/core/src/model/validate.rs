use std::collections::{HashMap, HashSet};
use std::fmt;

use super::{BinOp, Chart, ComponentId, Expr, Source, Subject, Type, UnaryOp, VarDecl, VarKind};

/// A structural or typing problem found in a chart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub subject: Subject,
    pub message: String,
}

impl Diagnostic {
    fn new(subject: Subject, message: impl Into<String>) -> Self {
        Diagnostic { subject, message: message.into() }
    }

    pub fn component(&self) -> Option<ComponentId> {
        match self.subject {
            Subject::Component(id) => Some(id),
            _ => None,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.subject {
            Subject::Chart => write!(f, "{}", self.message),
            Subject::Var(v) => write!(f, "variable {v}: {}", self.message),
            Subject::Component(id) => write!(f, "{id}: {}", self.message),
        }
    }
}

/// Type of `expr` under the declarations in `vars`. `after(...)` is only
/// accepted when `in_guard` is set.
pub fn type_of(expr: &Expr, vars: &HashMap<&str, &VarDecl>, in_guard: bool) -> Result<Type, String> {
    match expr {
        Expr::Lit(v) => Ok(v.ty()),
        Expr::Var(name) => vars
            .get(name.as_str())
            .map(|d| d.ty)
            .ok_or_else(|| format!("unknown variable `{name}`")),
        Expr::Unary(UnaryOp::Neg, e) => match type_of(e, vars, in_guard)? {
            t if t.is_numeric() => Ok(t),
            t => Err(format!("cannot negate a {}", t.keyword())),
        },
        Expr::Unary(UnaryOp::Not, e) => match type_of(e, vars, in_guard)? {
            Type::Bool => Ok(Type::Bool),
            t => Err(format!("`!` expects bool, found {}", t.keyword())),
        },
        Expr::Binary(op, l, r) => {
            let lt = type_of(l, vars, in_guard)?;
            let rt = type_of(r, vars, in_guard)?;
            let mismatch = || format!("`{}` cannot combine {} and {}", op.token(), lt.keyword(), rt.keyword());
            match op {
                BinOp::Math(_) if lt.is_numeric() && rt.is_numeric() => {
                    Ok(if lt == Type::Real || rt == Type::Real { Type::Real } else { Type::Int })
                }
                BinOp::Rel(_) if lt.is_numeric() && rt.is_numeric() => Ok(Type::Bool),
                BinOp::Rel(r) if r.is_equality() && lt == Type::Bool && rt == Type::Bool => Ok(Type::Bool),
                BinOp::Logic(_) if lt == Type::Bool && rt == Type::Bool => Ok(Type::Bool),
                _ => Err(mismatch()),
            }
        }
        Expr::After { amount, .. } => {
            if !in_guard {
                return Err("after(...) is only allowed in transition guards".into());
            }
            if !amount.is_numeric() || !amount.as_f64().is_finite() {
                return Err("after(...) expects a finite numeric amount".into());
            }
            Ok(Type::Bool)
        }
    }
}

/// Checks every chart invariant. An empty result means the chart is valid.
pub fn validate(chart: &Chart) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    let mut vars: HashMap<&str, &VarDecl> = HashMap::new();
    for v in &chart.vars {
        let subject = || Subject::Var(v.name.clone());
        if vars.insert(v.name.as_str(), v).is_some() {
            out.push(Diagnostic::new(subject(), "duplicate variable name"));
        }
        match (v.kind, v.init) {
            (VarKind::Input, Some(_)) => out.push(Diagnostic::new(subject(), "inputs cannot have an initial value")),
            (VarKind::Output, None) => out.push(Diagnostic::new(subject(), "outputs need an initial value")),
            (_, Some(init)) if init.ty() != v.ty => {
                out.push(Diagnostic::new(subject(), format!("initial value is not of type {}", v.ty.keyword())))
            }
            _ => {}
        }
    }

    if chart.states.is_empty() {
        out.push(Diagnostic::new(Subject::Chart, "chart has no states"));
    }

    let mut names = HashSet::new();
    let mut ids = HashSet::new();
    for s in &chart.states {
        let subject = || Subject::Component(s.id);
        if !ids.insert(s.id) {
            out.push(Diagnostic::new(subject(), "duplicate component id"));
        }
        if !names.insert(s.name.as_str()) {
            out.push(Diagnostic::new(subject(), format!("duplicate state name `{}`", s.name)));
        }
        for a in s.assignments() {
            match vars.get(a.target.as_str()) {
                None => out.push(Diagnostic::new(subject(), format!("assignment to unknown variable `{}`", a.target))),
                Some(d) if d.kind == VarKind::Input => {
                    out.push(Diagnostic::new(subject(), format!("cannot assign to input `{}`", a.target)))
                }
                Some(d) => match type_of(&a.value, &vars, false) {
                    Err(e) => out.push(Diagnostic::new(subject(), e)),
                    Ok(t) if !d.ty.accepts(t) => out.push(Diagnostic::new(
                        subject(),
                        format!("cannot assign {} to `{}` of type {}", t.keyword(), a.target, d.ty.keyword()),
                    )),
                    Ok(_) => {}
                },
            }
        }
    }

    let mut initial_count = 0;
    for t in &chart.transitions {
        let subject = || Subject::Component(t.id);
        if !ids.insert(t.id) {
            out.push(Diagnostic::new(subject(), "duplicate component id"));
        }
        if chart.state(t.dest).is_none() {
            out.push(Diagnostic::new(subject(), "unknown dest"));
        }
        match t.source {
            Source::Initial => {
                initial_count += 1;
                if t.guard.is_some() {
                    out.push(Diagnostic::new(subject(), "initial transition cannot have a guard"));
                }
            }
            Source::State(src) => {
                if chart.state(src).is_none() {
                    out.push(Diagnostic::new(subject(), "unknown source"));
                }
                match &t.guard {
                    None => out.push(Diagnostic::new(subject(), "transition needs a guard")),
                    Some(g) if g.conjuncts.is_empty() => out.push(Diagnostic::new(subject(), "empty guard")),
                    Some(g) => {
                        for (i, c) in g.conjuncts.iter().enumerate() {
                            if (i == 0) != c.connector.is_none() {
                                out.push(Diagnostic::new(subject(), "only the first condition lacks a connector"));
                            }
                            match type_of(&c.expr, &vars, true) {
                                Ok(Type::Bool) => {}
                                Ok(t) => out.push(Diagnostic::new(
                                    subject(),
                                    format!("condition must be bool, found {}", t.keyword()),
                                )),
                                Err(e) => out.push(Diagnostic::new(subject(), e)),
                            }
                        }
                    }
                }
            }
        }
    }
    match initial_count {
        1 => {}
        0 => out.push(Diagnostic::new(Subject::Chart, "missing initial transition")),
        _ => out.push(Diagnostic::new(Subject::Chart, "more than one initial transition")),
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Assignment, Guard, RelOp, Value};

    fn two_state_chart() -> Chart {
        let mut c = Chart::new("M");
        c.declare("x", VarKind::Input, Type::Real, None);
        c.declare("y", VarKind::Output, Type::Int, Some(Value::Int(0)));
        let a = c.add_state("A", vec![], vec![]);
        let b = c.add_state("B", vec![Assignment { target: "y".into(), value: Expr::Lit(Value::Int(1)) }], vec![]);
        c.add_transition(Source::Initial, a, None);
        c.add_transition(
            Source::State(a),
            b,
            Some(Guard::single(Expr::binary(BinOp::Rel(RelOp::Gt), Expr::var("x"), Expr::Lit(Value::Real(1.0))))),
        );
        c
    }

    #[test]
    fn valid_chart_has_no_diagnostics() {
        assert_eq!(validate(&two_state_chart()), vec![]);
    }

    #[test]
    fn missing_dest_is_reported_once() {
        let mut c = two_state_chart();
        c.transitions[1].dest = ComponentId::state(99);
        let diags = validate(&c);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].message, "unknown dest");
        assert_eq!(diags[0].component(), Some(c.transitions[1].id));
    }

    #[test]
    fn duplicate_state_name() {
        let mut c = two_state_chart();
        c.states[1].name = "A".into();
        let diags = validate(&c);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.starts_with("duplicate state name"));
    }

    #[test]
    fn assigning_inputs_and_reals_to_ints_is_rejected() {
        let mut c = two_state_chart();
        c.states[0].entry.push(Assignment { target: "x".into(), value: Expr::Lit(Value::Real(0.0)) });
        c.states[1].entry[0].value = Expr::Lit(Value::Real(2.5));
        assert_eq!(validate(&c).len(), 2);
    }

    #[test]
    fn after_outside_guards_is_rejected() {
        let mut c = two_state_chart();
        c.declare("flag", VarKind::Local, Type::Bool, None);
        c.states[0]
            .entry
            .push(Assignment { target: "flag".into(), value: Expr::After { amount: Value::Int(1), unit: crate::model::TimeUnit::Sec } });
        let diags = validate(&c);
        assert_eq!(diags.len(), 1, "{diags:?}");
    }

    #[test]
    fn bool_ordering_is_a_type_error() {
        let vars = HashMap::new();
        let e = Expr::binary(BinOp::Rel(RelOp::Lt), Expr::Lit(Value::Bool(true)), Expr::Lit(Value::Bool(false)));
        assert!(type_of(&e, &vars, true).is_err());
        let e = Expr::binary(BinOp::Rel(RelOp::Eq), Expr::Lit(Value::Bool(true)), Expr::Lit(Value::Bool(false)));
        assert_eq!(type_of(&e, &vars, true), Ok(Type::Bool));
    }

    #[test]
    fn initial_transition_rules() {
        let mut c = two_state_chart();
        let a = c.states[0].id;
        c.add_transition(Source::Initial, a, None);
        assert_eq!(validate(&c)[0].message, "more than one initial transition");
        c.transitions.retain(|t| !t.is_initial());
        assert_eq!(validate(&c)[0].message, "missing initial transition");
    }
}
