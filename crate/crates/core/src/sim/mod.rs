//! Fixed-step discrete-time interpreter for charts.
//!
//! Step semantics: at `t = 0` variables take their initial values, the
//! initial transition fires and the target's entry actions run. At every
//! later step `k` (time `k * dt`) inputs are latched (zero-order hold), the
//! active state's outgoing transitions are scanned in priority order and the
//! first enabled one fires (entry actions of the target run and its timer
//! resets); otherwise the active state's during actions run. Outputs are
//! sampled at the end of every step. At most one transition fires per step.

mod trace;

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::dsl::SourceSpan;
use crate::model::{
    BinOp, Chart, ComponentId, Expr, LogicOp, MathOp, RelOp, Source, Subject, Type, UnaryOp, Value, VarKind,
};

pub use trace::{read_csv_from, read_csv_table, write_csv, CsvTable, SignalTrace, StimulusSet, TraceError};

/// Slack when comparing a state's elapsed time against an `after` bound, so
/// that `k * dt` rounding does not delay a timer by one step.
pub const TIMER_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("non-finite result")]
    NonFinite,
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("unbound variable `{0}`")]
    Unbound(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("division by zero in {component} at t={time}")]
    DivisionByZero { component: ComponentId, span: Option<SourceSpan>, time: f64 },
    #[error("non-finite or overflowing value for `{var}` in {component} at t={time}")]
    NonFiniteValue { var: String, component: ComponentId, time: f64 },
    #[error("input mismatch: {0}")]
    InputMismatch(String),
    #[error("invalid timing: {0}")]
    BadTiming(String),
    #[error("chart cannot be simulated: {0}")]
    InvalidChart(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverageTrace {
    pub executed_states: BTreeSet<ComponentId>,
    pub fired_transitions: BTreeSet<ComponentId>,
}

impl CoverageTrace {
    pub fn covers(&self, id: ComponentId) -> bool {
        self.executed_states.contains(&id) || self.fired_transitions.contains(&id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// One trace per chart output, in declaration order.
    pub outputs: Vec<SignalTrace>,
    pub coverage: CoverageTrace,
    pub steps: usize,
}

impl SimResult {
    pub fn output(&self, name: &str) -> Option<&SignalTrace> {
        self.outputs.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone)]
enum Code {
    Lit(Value),
    Slot(usize),
    Unary(UnaryOp, Box<Code>),
    Binary(BinOp, Box<Code>, Box<Code>),
    /// Threshold in seconds.
    After(f64),
}

fn compile(e: &Expr, slots: &HashMap<&str, usize>) -> Result<Code, String> {
    Ok(match e {
        Expr::Lit(v) => Code::Lit(*v),
        Expr::Var(name) => Code::Slot(*slots.get(name.as_str()).ok_or_else(|| format!("unknown variable `{name}`"))?),
        Expr::Unary(op, inner) => Code::Unary(*op, Box::new(compile(inner, slots)?)),
        Expr::Binary(op, l, r) => Code::Binary(*op, Box::new(compile(l, slots)?), Box::new(compile(r, slots)?)),
        Expr::After { amount, unit } => Code::After(amount.as_f64() * unit.seconds()),
    })
}

fn real(r: f64) -> Result<Value, EvalError> {
    if r.is_finite() {
        Ok(Value::Real(r))
    } else {
        Err(EvalError::NonFinite)
    }
}

fn math(op: MathOp, l: Value, r: Value) -> Result<Value, EvalError> {
    match (l, r) {
        (Value::Int(a), Value::Int(b)) => {
            let v = match op {
                MathOp::Add => a.checked_add(b),
                MathOp::Sub => a.checked_sub(b),
                MathOp::Mul => a.checked_mul(b),
                MathOp::Div if b == 0 => return Err(EvalError::DivisionByZero),
                MathOp::Div => a.checked_div(b),
            };
            v.map(Value::Int).ok_or(EvalError::Overflow)
        }
        (a, b) if a.is_numeric() && b.is_numeric() => {
            let (a, b) = (a.as_f64(), b.as_f64());
            match op {
                MathOp::Add => real(a + b),
                MathOp::Sub => real(a - b),
                MathOp::Mul => real(a * b),
                MathOp::Div if b == 0.0 => Err(EvalError::DivisionByZero),
                MathOp::Div => real(a / b),
            }
        }
        _ => Err(EvalError::TypeMismatch(format!("`{}` on non-numeric operands", op.token()))),
    }
}

fn compare(op: RelOp, l: Value, r: Value) -> Result<bool, EvalError> {
    use std::cmp::Ordering;
    let ord = match (l, r) {
        (Value::Bool(a), Value::Bool(b)) if op.is_equality() => Some(a.cmp(&b)),
        (Value::Int(a), Value::Int(b)) => Some(a.cmp(&b)),
        (a, b) if a.is_numeric() && b.is_numeric() => a.as_f64().partial_cmp(&b.as_f64()),
        _ => return Err(EvalError::TypeMismatch(format!("`{}` on incompatible operands", op.token()))),
    };
    let Some(ord) = ord else { return Ok(op == RelOp::Ne) };
    Ok(match op {
        RelOp::Lt => ord == Ordering::Less,
        RelOp::Le => ord != Ordering::Greater,
        RelOp::Gt => ord == Ordering::Greater,
        RelOp::Ge => ord != Ordering::Less,
        RelOp::Eq => ord == Ordering::Equal,
        RelOp::Ne => ord != Ordering::Equal,
    })
}

fn truth(v: Value) -> Result<bool, EvalError> {
    match v {
        Value::Bool(b) => Ok(b),
        other => Err(EvalError::TypeMismatch(format!("expected bool, found {}", other.ty().keyword()))),
    }
}

fn eval(code: &Code, env: &[Value], time_in_state: f64) -> Result<Value, EvalError> {
    match code {
        Code::Lit(v) => Ok(*v),
        Code::Slot(i) => Ok(env[*i]),
        Code::After(threshold) => Ok(Value::Bool(time_in_state + TIMER_SLACK >= *threshold)),
        Code::Unary(UnaryOp::Not, e) => Ok(Value::Bool(!truth(eval(e, env, time_in_state)?)?)),
        Code::Unary(UnaryOp::Neg, e) => match eval(e, env, time_in_state)? {
            Value::Int(i) => i.checked_neg().map(Value::Int).ok_or(EvalError::Overflow),
            Value::Real(r) => Ok(Value::Real(-r)),
            Value::Bool(_) => Err(EvalError::TypeMismatch("cannot negate a bool".into())),
        },
        Code::Binary(BinOp::Logic(op), l, r) => {
            let lhs = truth(eval(l, env, time_in_state)?)?;
            match (op, lhs) {
                (LogicOp::And, false) => Ok(Value::Bool(false)),
                (LogicOp::Or, true) => Ok(Value::Bool(true)),
                _ => Ok(Value::Bool(truth(eval(r, env, time_in_state)?)?)),
            }
        }
        Code::Binary(BinOp::Math(op), l, r) => math(*op, eval(l, env, time_in_state)?, eval(r, env, time_in_state)?),
        Code::Binary(BinOp::Rel(op), l, r) => {
            Ok(Value::Bool(compare(*op, eval(l, env, time_in_state)?, eval(r, env, time_in_state)?)?))
        }
    }
}

/// Evaluates an expression against named variable values. `&&` and `||`
/// short-circuit; `after(n, unit)` holds once `time_in_state` reaches `n`
/// units.
pub fn evaluate(expr: &Expr, env: &HashMap<String, Value>, time_in_state: f64) -> Result<Value, EvalError> {
    let names: Vec<&String> = env.keys().collect();
    let slots: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let values: Vec<Value> = names.iter().map(|n| env[*n]).collect();
    let code = compile(expr, &slots).map_err(|_| {
        let mut missing = String::new();
        expr.walk(&mut |e| {
            if let Expr::Var(v) = e {
                if missing.is_empty() && !env.contains_key(v) {
                    missing = v.clone();
                }
            }
        });
        EvalError::Unbound(missing)
    })?;
    eval(&code, &values, time_in_state)
}

struct Assign {
    slot: usize,
    ty: Type,
    code: Code,
}

struct CompiledTransition {
    id: ComponentId,
    dest: usize,
    conditions: Vec<(Option<LogicOp>, Code)>,
}

struct CompiledState {
    id: ComponentId,
    entry: Vec<Assign>,
    during: Vec<Assign>,
    outgoing: Vec<CompiledTransition>,
}

struct Program<'c> {
    chart: &'c Chart,
    names: Vec<&'c str>,
    init: Vec<Value>,
    inputs: Vec<(usize, usize)>,
    outputs: Vec<usize>,
    states: Vec<CompiledState>,
    initial: (ComponentId, usize),
}

impl<'c> Program<'c> {
    fn build(chart: &'c Chart, stim: &StimulusSet) -> Result<Self, SimError> {
        let invalid = |m: String| SimError::InvalidChart(m);
        let slots: HashMap<&str, usize> = chart.vars.iter().enumerate().map(|(i, v)| (v.name.as_str(), i)).collect();
        let names = chart.vars.iter().map(|v| v.name.as_str()).collect();
        let init = chart.vars.iter().map(|v| v.init.unwrap_or(Value::default_of(v.ty))).collect();

        let mut inputs = Vec::new();
        for (i, v) in chart.vars.iter().enumerate().filter(|(_, v)| v.kind == VarKind::Input) {
            let pos = stim
                .inputs
                .iter()
                .position(|t| t.name == v.name)
                .ok_or_else(|| SimError::InputMismatch(format!("missing input `{}`", v.name)))?;
            if let Some(bad) = stim.inputs[pos].values.iter().find(|x| x.ty() != v.ty) {
                return Err(SimError::InputMismatch(format!(
                    "input `{}` expects {} values, found {}",
                    v.name,
                    v.ty.keyword(),
                    bad.ty().keyword()
                )));
            }
            inputs.push((i, pos));
        }
        if let Some(extra) = stim.inputs.iter().find(|t| chart.var(&t.name).is_none_or(|v| v.kind != VarKind::Input)) {
            return Err(SimError::InputMismatch(format!("`{}` is not an input of the chart", extra.name)));
        }
        let outputs = chart
            .vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Output)
            .map(|(i, _)| i)
            .collect();

        let index_of = |id: ComponentId| chart.states.iter().position(|s| s.id == id);
        let assigns = |list: &[crate::model::Assignment]| -> Result<Vec<Assign>, SimError> {
            list.iter()
                .map(|a| {
                    let slot = *slots.get(a.target.as_str()).ok_or_else(|| invalid(format!("unknown `{}`", a.target)))?;
                    Ok(Assign { slot, ty: chart.vars[slot].ty, code: compile(&a.value, &slots).map_err(invalid)? })
                })
                .collect()
        };
        let mut states = chart
            .states
            .iter()
            .map(|s| {
                Ok(CompiledState { id: s.id, entry: assigns(&s.entry)?, during: assigns(&s.during)?, outgoing: Vec::new() })
            })
            .collect::<Result<Vec<_>, SimError>>()?;

        let mut initial = None;
        for t in &chart.transitions {
            let dest = index_of(t.dest).ok_or_else(|| invalid(format!("{} has an unknown dest", t.id)))?;
            match t.source {
                Source::Initial => initial = Some((t.id, dest)),
                Source::State(src) => {
                    let src = index_of(src).ok_or_else(|| invalid(format!("{} has an unknown source", t.id)))?;
                    let conditions = t
                        .guard
                        .as_ref()
                        .map(|g| {
                            g.conjuncts
                                .iter()
                                .map(|c| Ok((c.connector, compile(&c.expr, &slots)?)))
                                .collect::<Result<Vec<_>, String>>()
                        })
                        .transpose()
                        .map_err(invalid)?
                        .unwrap_or_default();
                    states[src].outgoing.push(CompiledTransition { id: t.id, dest, conditions });
                }
            }
        }
        let initial = initial.ok_or_else(|| invalid("missing initial transition".into()))?;
        Ok(Program { chart, names, init, inputs, outputs, states, initial })
    }

    fn run_actions(&self, actions: &[Assign], env: &mut [Value], owner: ComponentId, time: f64, tis: f64) -> Result<(), SimError> {
        for a in actions {
            let v = eval(&a.code, env, tis).map_err(|e| self.error(e, owner, self.names[a.slot], time))?;
            env[a.slot] = v.coerce(a.ty).ok_or_else(|| SimError::InvalidChart(format!("ill-typed assignment in {owner}")))?;
        }
        Ok(())
    }

    fn error(&self, e: EvalError, component: ComponentId, var: &str, time: f64) -> SimError {
        match e {
            EvalError::DivisionByZero => SimError::DivisionByZero {
                component,
                span: self.chart.spans.get(&Subject::Component(component)).cloned(),
                time,
            },
            EvalError::Overflow | EvalError::NonFinite => SimError::NonFiniteValue { var: var.to_string(), component, time },
            other => SimError::InvalidChart(other.to_string()),
        }
    }

    fn guard_holds(&self, t: &CompiledTransition, env: &[Value], time: f64, tis: f64) -> Result<bool, SimError> {
        let mut acc = false;
        for (connector, code) in &t.conditions {
            let skip = match connector {
                None => false,
                Some(LogicOp::And) => !acc,
                Some(LogicOp::Or) => acc,
            };
            if skip {
                continue;
            }
            let v = eval(code, env, tis).map_err(|e| self.error(e, t.id, "<guard>", time))?;
            acc = truth(v).map_err(|e| SimError::InvalidChart(e.to_string()))?;
        }
        Ok(acc)
    }
}

/// Runs `chart` against `stim`. The result is a pure function of the inputs.
pub fn simulate(chart: &Chart, stim: &StimulusSet) -> Result<SimResult, SimError> {
    let steps = stim.steps().map_err(|e| SimError::BadTiming(e.to_string()))?;
    let dt = stim.dt;
    let program = Program::build(chart, stim)?;

    let mut env = program.init.clone();
    let mut coverage = CoverageTrace::default();
    let mut outputs: Vec<SignalTrace> = program
        .outputs
        .iter()
        .map(|&i| SignalTrace { name: program.names[i].to_string(), dt, values: Vec::with_capacity(steps + 1) })
        .collect();

    let latch = |env: &mut [Value], time: f64| {
        for &(slot, trace) in &program.inputs {
            env[slot] = stim.inputs[trace].sample_at(time);
        }
    };
    let sample = |env: &[Value], outputs: &mut Vec<SignalTrace>| {
        for (trace, &slot) in outputs.iter_mut().zip(&program.outputs) {
            trace.values.push(env[slot]);
        }
    };

    latch(&mut env, 0.0);
    let (initial_id, mut active) = program.initial;
    coverage.fired_transitions.insert(initial_id);
    coverage.executed_states.insert(program.states[active].id);
    program.run_actions(&program.states[active].entry, &mut env, program.states[active].id, 0.0, 0.0)?;
    let mut entered_at = 0usize;
    sample(&env, &mut outputs);

    for k in 1..=steps {
        let time = k as f64 * dt;
        latch(&mut env, time);
        let tis = (k - entered_at) as f64 * dt;
        let state = &program.states[active];
        let mut fired = None;
        for t in &state.outgoing {
            if program.guard_holds(t, &env, time, tis)? {
                fired = Some(t);
                break;
            }
        }
        match fired {
            Some(t) => {
                coverage.fired_transitions.insert(t.id);
                active = t.dest;
                entered_at = k;
                let target = &program.states[active];
                coverage.executed_states.insert(target.id);
                program.run_actions(&target.entry, &mut env, target.id, time, 0.0)?;
            }
            None => program.run_actions(&state.during, &mut env, state.id, time, tis)?,
        }
        sample(&env, &mut outputs);
    }

    Ok(SimResult { outputs, coverage, steps })
}
