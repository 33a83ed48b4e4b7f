//! The fifteen repair operators and the global/local mutation policies.

use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::localize::{roulette_select_among, SuspiciousnessRanking};
use crate::model::{
    apply_edit, type_of, Assignment, BinOp, Block, Chart, ComponentId, ComponentKind, Edit, EditParams, Expr, LogicOp,
    MathOp, RelOp, Source, TimeUnit, Type, Value, VarDecl, VarKind,
};

/// Roulette draws attempted before falling back to a uniform choice.
pub const ROULETTE_RETRIES: usize = 20;
/// Parameter draws attempted per operator before giving up on it.
const PARAM_RETRIES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    RelationalOpReplace,
    ConditionalOpReplace,
    MathOpReplace,
    AfterUnitChange,
    NumericReplace,
    TransitionDestReplace,
    TransitionRootReplace,
    InitialTransitionChange,
    StateDelete,
    TransitionDelete,
    StateVarDelete,
    TransitionCondDelete,
    MathOpInsert,
    VarInsert,
    CondInsert,
}

/// Replacement, deletion or insertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorClass {
    R,
    D,
    I,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 15] = [
        OperatorKind::RelationalOpReplace,
        OperatorKind::ConditionalOpReplace,
        OperatorKind::MathOpReplace,
        OperatorKind::AfterUnitChange,
        OperatorKind::NumericReplace,
        OperatorKind::TransitionDestReplace,
        OperatorKind::TransitionRootReplace,
        OperatorKind::InitialTransitionChange,
        OperatorKind::StateDelete,
        OperatorKind::TransitionDelete,
        OperatorKind::StateVarDelete,
        OperatorKind::TransitionCondDelete,
        OperatorKind::MathOpInsert,
        OperatorKind::VarInsert,
        OperatorKind::CondInsert,
    ];

    pub fn class(self) -> OperatorClass {
        use OperatorKind::*;
        match self {
            StateDelete | TransitionDelete | StateVarDelete | TransitionCondDelete => OperatorClass::D,
            MathOpInsert | VarInsert | CondInsert => OperatorClass::I,
            _ => OperatorClass::R,
        }
    }

    /// Component kinds the operator is defined on.
    pub fn applies_to(self, kind: ComponentKind) -> bool {
        use OperatorKind::*;
        match self {
            MathOpReplace | NumericReplace => true,
            StateDelete | StateVarDelete | MathOpInsert | VarInsert => kind == ComponentKind::State,
            _ => kind == ComponentKind::Transition,
        }
    }

    pub fn name(self) -> &'static str {
        use OperatorKind::*;
        match self {
            RelationalOpReplace => "RelationalOpReplace",
            ConditionalOpReplace => "ConditionalOpReplace",
            MathOpReplace => "MathOpReplace",
            AfterUnitChange => "AfterUnitChange",
            NumericReplace => "NumericReplace",
            TransitionDestReplace => "TransitionDestReplace",
            TransitionRootReplace => "TransitionRootReplace",
            InitialTransitionChange => "InitialTransitionChange",
            StateDelete => "StateDelete",
            TransitionDelete => "TransitionDelete",
            StateVarDelete => "StateVarDelete",
            TransitionCondDelete => "TransitionCondDelete",
            MathOpInsert => "MathOpInsert",
            VarInsert => "VarInsert",
            CondInsert => "CondInsert",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl std::fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MutationError {
    #[error("no mutation operator is applicable")]
    NothingApplicable,
    #[error("component {0} no longer exists")]
    ComponentVanished(ComponentId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MutationOutcome {
    pub variant: Chart,
    pub edit: Edit,
    pub component: ComponentId,
    pub operator: OperatorKind,
}

/// Token sites of one component, in site order.
#[derive(Default)]
struct Sites {
    rel: Vec<(RelOp, bool)>,
    logic: Vec<LogicOp>,
    math: Vec<MathOp>,
    units: Vec<TimeUnit>,
    numbers: Vec<Value>,
}

fn var_map(chart: &Chart) -> HashMap<&str, &VarDecl> {
    chart.vars.iter().map(|v| (v.name.as_str(), v)).collect()
}

fn sites(chart: &Chart, id: ComponentId) -> Sites {
    use crate::model::{for_each_site, SiteRef};
    let vars = var_map(chart);
    let mut s = Sites::default();
    let is_transition = id.kind == ComponentKind::Transition;
    for_each_site(chart, id, &mut |site| match site {
        SiteRef::Connector(op) => s.logic.push(op),
        SiteRef::Node(node) => match node {
            Expr::Binary(BinOp::Rel(op), l, _) => {
                let boolean = type_of(l, &vars, is_transition).is_ok_and(|t| t == Type::Bool);
                s.rel.push((*op, boolean));
            }
            Expr::Binary(BinOp::Logic(op), ..) if is_transition => s.logic.push(*op),
            Expr::Binary(BinOp::Math(op), ..) => s.math.push(*op),
            Expr::After { amount, unit } => {
                s.units.push(*unit);
                s.numbers.push(*amount);
            }
            Expr::Lit(v) if v.is_numeric() => s.numbers.push(*v),
            _ => {}
        },
    });
    s
}

fn assignable(chart: &Chart) -> impl Iterator<Item = &VarDecl> {
    chart.vars.iter().filter(|v| matches!(v.kind, VarKind::Output | VarKind::Local))
}

fn readable(chart: &Chart) -> impl Iterator<Item = &VarDecl> {
    chart.vars.iter().filter(|v| matches!(v.kind, VarKind::Input | VarKind::Local))
}

/// Operators that can act on `c` in its current form.
pub fn applicable_ops(chart: &Chart, c: ComponentId) -> Vec<OperatorKind> {
    use OperatorKind::*;
    let mut ops = Vec::new();
    let many_states = chart.states.len() >= 2;
    match c.kind {
        ComponentKind::Transition => {
            let Some(t) = chart.transition(c) else { return ops };
            if t.is_initial() {
                if many_states {
                    ops.push(InitialTransitionChange);
                }
                return ops;
            }
            let s = sites(chart, c);
            let conjuncts = t.guard.as_ref().map_or(0, |g| g.conjuncts.len());
            for (op, present) in [
                (RelationalOpReplace, !s.rel.is_empty()),
                (ConditionalOpReplace, !s.logic.is_empty()),
                (MathOpReplace, !s.math.is_empty()),
                (AfterUnitChange, !s.units.is_empty()),
                (NumericReplace, !s.numbers.is_empty()),
                (TransitionDestReplace, many_states),
                (TransitionRootReplace, many_states),
                (TransitionDelete, true),
                (TransitionCondDelete, conjuncts >= 2),
                (CondInsert, readable(chart).next().is_some() && t.guard.is_some()),
            ] {
                if present {
                    ops.push(op);
                }
            }
        }
        ComponentKind::State => {
            let Some(state) = chart.state(c) else { return ops };
            let s = sites(chart, c);
            let is_initial_target = chart.initial().is_some_and(|t| t.dest == c);
            for (op, present) in [
                (MathOpReplace, !s.math.is_empty()),
                (NumericReplace, !s.numbers.is_empty()),
                (StateDelete, many_states && !is_initial_target),
                (StateVarDelete, state.assignments().next().is_some()),
                (MathOpInsert, assignable(chart).any(|v| v.ty.is_numeric())),
                (VarInsert, assignable(chart).next().is_some()),
            ] {
                if present {
                    ops.push(op);
                }
            }
        }
    }
    ops
}

fn pick_other<T: Copy + PartialEq, R: Rng + ?Sized>(pool: &[T], current: T, rng: &mut R) -> Option<T> {
    let others: Vec<T> = pool.iter().copied().filter(|x| *x != current).collect();
    others.choose(rng).copied()
}

/// Candidate values for a numeric literal; type is preserved and the
/// current value is never proposed.
fn numeric_moves(current: Value, constants: &[Value]) -> Vec<Value> {
    let x = current.as_f64();
    let mut raw = vec![-x, 0.0, 1.0, -1.0, x * 10.0, x * 0.1, x * 2.0, x * 0.5, x + 1.0, x - 1.0];
    raw.extend(constants.iter().map(|c| c.as_f64()));
    let mut out: Vec<Value> = Vec::new();
    for r in raw {
        let v = match current {
            Value::Int(_) => {
                let r = r.round();
                if !r.is_finite() || r.abs() >= 9.2e18 {
                    continue;
                }
                Value::Int(r as i64)
            }
            _ if !r.is_finite() => continue,
            _ => Value::Real(r),
        };
        if v != current && !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn literal_for<R: Rng + ?Sized>(ty: Type, constants: &[Value], rng: &mut R) -> Value {
    match ty {
        Type::Bool => Value::Bool(rng.random_bool(0.5)),
        _ => {
            let mut pool: Vec<Value> = constants.iter().filter_map(|c| numeric_as(*c, ty)).collect();
            for extra in [Value::Int(0), Value::Int(1)] {
                let v = numeric_as(extra, ty).expect("numeric");
                if !pool.contains(&v) {
                    pool.push(v);
                }
            }
            *pool.choose(rng).expect("pool is never empty")
        }
    }
}

fn numeric_as(v: Value, ty: Type) -> Option<Value> {
    match ty {
        Type::Bool => None,
        Type::Int => {
            let r = v.as_f64().round();
            (r.is_finite() && r.abs() < 9.2e18).then_some(Value::Int(r as i64))
        }
        Type::Real => Some(Value::Real(v.as_f64())),
    }
}

/// Draws parameters for `op` on `c`, or `None` when there is nothing to draw.
fn draw_params<R: Rng + ?Sized>(chart: &Chart, c: ComponentId, op: OperatorKind, rng: &mut R) -> Option<EditParams> {
    use OperatorKind::*;
    let others = |current: ComponentId| -> Vec<ComponentId> {
        chart.states.iter().map(|s| s.id).filter(|id| *id != current).collect()
    };
    let constants = chart.numeric_constants();
    Some(match op {
        RelationalOpReplace => {
            let s = sites(chart, c);
            let site = rng.random_range(0..s.rel.len().max(1));
            let &(from, boolean) = s.rel.get(site)?;
            let pool: &[RelOp] = if boolean { &[RelOp::Eq, RelOp::Ne] } else { &RelOp::ALL };
            EditParams::Relational { site, from, to: pick_other(pool, from, rng)? }
        }
        ConditionalOpReplace => {
            let s = sites(chart, c);
            let site = rng.random_range(0..s.logic.len().max(1));
            let from = *s.logic.get(site)?;
            EditParams::Conditional { site, from, to: pick_other(&LogicOp::ALL, from, rng)? }
        }
        MathOpReplace => {
            let s = sites(chart, c);
            let site = rng.random_range(0..s.math.len().max(1));
            let from = *s.math.get(site)?;
            EditParams::Math { site, from, to: pick_other(&MathOp::ALL, from, rng)? }
        }
        AfterUnitChange => {
            let s = sites(chart, c);
            let site = rng.random_range(0..s.units.len().max(1));
            let from = *s.units.get(site)?;
            EditParams::AfterUnit { site, from, to: pick_other(&TimeUnit::ALL, from, rng)? }
        }
        NumericReplace => {
            let s = sites(chart, c);
            let site = rng.random_range(0..s.numbers.len().max(1));
            let from = *s.numbers.get(site)?;
            let to = *numeric_moves(from, &constants).choose(rng)?;
            EditParams::Numeric { site, from, to }
        }
        TransitionDestReplace | InitialTransitionChange => {
            let t = chart.transition(c)?;
            EditParams::Retarget { to: *others(t.dest).choose(rng)? }
        }
        TransitionRootReplace => {
            let Source::State(src) = chart.transition(c)?.source else { return None };
            EditParams::Retarget { to: *others(src).choose(rng)? }
        }
        StateDelete | TransitionDelete => EditParams::Delete,
        StateVarDelete => {
            let s = chart.state(c)?;
            let total = s.entry.len() + s.during.len();
            if total == 0 {
                return None;
            }
            let k = rng.random_range(0..total);
            if k < s.entry.len() {
                EditParams::DeleteAssignment { block: Block::Entry, index: k }
            } else {
                EditParams::DeleteAssignment { block: Block::During, index: k - s.entry.len() }
            }
        }
        TransitionCondDelete => {
            let n = chart.transition(c)?.guard.as_ref()?.conjuncts.len();
            if n < 2 {
                return None;
            }
            EditParams::DeleteCondition { index: rng.random_range(0..n) }
        }
        MathOpInsert => {
            let targets: Vec<&VarDecl> = assignable(chart).filter(|v| v.ty.is_numeric()).collect();
            let target = *targets.choose(rng)?;
            let op = *[MathOp::Add, MathOp::Sub, MathOp::Mul].choose(rng)?;
            let fits = |ty: Type| ty == target.ty || (target.ty == Type::Real && ty == Type::Int);
            let inputs: Vec<&VarDecl> =
                chart.vars_of(VarKind::Input).filter(|v| v.ty.is_numeric() && fits(v.ty)).collect();
            let term = if !inputs.is_empty() && rng.random_bool(0.5) {
                Expr::var(inputs.choose(rng)?.name.clone())
            } else {
                Expr::Lit(literal_for(target.ty, &constants, rng))
            };
            EditParams::InsertAssignment {
                block: Block::Entry,
                assignment: Assignment {
                    target: target.name.clone(),
                    value: Expr::binary(BinOp::Math(op), Expr::var(target.name.clone()), term),
                },
            }
        }
        VarInsert => {
            let targets: Vec<&VarDecl> = assignable(chart).collect();
            let target = *targets.choose(rng)?;
            EditParams::InsertAssignment {
                block: Block::Entry,
                assignment: Assignment {
                    target: target.name.clone(),
                    value: Expr::Lit(literal_for(target.ty, &constants, rng)),
                },
            }
        }
        CondInsert => {
            let vars: Vec<&VarDecl> = readable(chart).collect();
            let var = *vars.choose(rng)?;
            let connector = *LogicOp::ALL.choose(rng)?;
            let (op, lit) = if var.ty == Type::Bool {
                (*[RelOp::Eq, RelOp::Ne].choose(rng)?, Value::Bool(rng.random_bool(0.5)))
            } else {
                let pool: Vec<Value> = constants.iter().filter_map(|c| numeric_as(*c, var.ty)).collect();
                let lit = pool.choose(rng).copied().unwrap_or(numeric_as(Value::Int(0), var.ty)?);
                (*RelOp::ALL.choose(rng)?, lit)
            };
            EditParams::InsertCondition {
                connector,
                expr: Expr::binary(BinOp::Rel(op), Expr::var(var.name.clone()), Expr::Lit(lit)),
            }
        }
    })
}

/// Draws parameters for `op` and applies them, retrying a few times when a
/// draw produces an invalid chart.
fn try_operator<R: Rng + ?Sized>(
    chart: &Chart,
    c: ComponentId,
    op: OperatorKind,
    rng: &mut R,
) -> Option<MutationOutcome> {
    for _ in 0..PARAM_RETRIES {
        let params = draw_params(chart, c, op, rng)?;
        let edit = Edit { op, target: c, params };
        if let Ok(variant) = apply_edit(chart, &edit) {
            return Some(MutationOutcome { variant, edit, component: c, operator: op });
        }
    }
    None
}

/// Tries the operators in random order until one succeeds.
fn try_any<R: Rng + ?Sized>(chart: &Chart, c: ComponentId, mut ops: Vec<OperatorKind>, rng: &mut R) -> Option<MutationOutcome> {
    ops.shuffle(rng);
    ops.into_iter().find_map(|op| try_operator(chart, c, op, rng))
}

/// Picks a component by roulette over `ranking` (restricted to components
/// still present), then a uniformly random applicable operator.
pub fn apply_global_mutation<R: Rng + ?Sized>(
    chart: &Chart,
    ranking: &SuspiciousnessRanking,
    rng: &mut R,
) -> Result<MutationOutcome, MutationError> {
    for _ in 0..ROULETTE_RETRIES {
        let Some(c) = roulette_select_among(ranking, |id| chart.contains(id), rng) else { break };
        let ops = applicable_ops(chart, c);
        let Some(&op) = ops.choose(rng) else { continue };
        if let Some(out) = try_operator(chart, c, op, rng) {
            return Ok(out);
        }
    }
    let mut candidates: Vec<ComponentId> = chart.components().into_iter().map(|(id, _)| id).collect();
    candidates.shuffle(rng);
    candidates
        .into_iter()
        .find_map(|c| try_any(chart, c, applicable_ops(chart, c), rng))
        .ok_or(MutationError::NothingApplicable)
}

/// Mutates component `c` again. With two or more applicable operators,
/// `last_op` is reused with probability 0.5 when still applicable; otherwise
/// one of the other operators is drawn uniformly.
pub fn apply_local_mutation<R: Rng + ?Sized>(
    chart: &Chart,
    c: ComponentId,
    last_op: OperatorKind,
    rng: &mut R,
) -> Result<MutationOutcome, MutationError> {
    if !chart.contains(c) {
        return Err(MutationError::ComponentVanished(c));
    }
    let ops = applicable_ops(chart, c);
    let op = match ops.as_slice() {
        [] => return Err(MutationError::NothingApplicable),
        [only] => *only,
        _ if ops.contains(&last_op) => {
            if rng.random_bool(0.5) {
                last_op
            } else {
                pick_other(&ops, last_op, rng).expect("at least two operators")
            }
        }
        _ => *ops.choose(rng).expect("non-empty"),
    };
    if let Some(out) = try_operator(chart, c, op, rng) {
        return Ok(out);
    }
    let rest: Vec<OperatorKind> = ops.into_iter().filter(|o| *o != op).collect();
    try_any(chart, c, rest, rng).ok_or(MutationError::NothingApplicable)
}
