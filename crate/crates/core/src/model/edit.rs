//! Chart edits and their application.
//!
//! Token-level edits address a "site": the n-th occurrence of a token class
//! inside one component, counted in a fixed pre-order (guard conditions left
//! to right for transitions; entry then during assignments for states).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    validate, Assignment, BinOp, Chart, ComponentId, ComponentKind, Conjunct, Expr, LogicOp, MathOp, RelOp, Source,
    TimeUnit, Value,
};
use crate::mutate::OperatorKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Entry,
    During,
}

/// Operator-specific payload of an [`Edit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EditParams {
    Relational { site: usize, from: RelOp, to: RelOp },
    Conditional { site: usize, from: LogicOp, to: LogicOp },
    Math { site: usize, from: MathOp, to: MathOp },
    AfterUnit { site: usize, from: TimeUnit, to: TimeUnit },
    Numeric { site: usize, from: Value, to: Value },
    /// New destination, new source, or new initial target depending on the operator.
    Retarget { to: ComponentId },
    Delete,
    DeleteAssignment { block: Block, index: usize },
    DeleteCondition { index: usize },
    InsertAssignment { block: Block, assignment: Assignment },
    InsertCondition { connector: LogicOp, expr: Expr },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edit {
    pub op: OperatorKind,
    #[serde(rename = "component")]
    pub target: ComponentId,
    pub params: EditParams,
}

/// Ordered edits, replayed left to right on the original chart.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Patch {
    pub edits: Vec<Edit>,
}

impl Patch {
    pub fn with(&self, edit: Edit) -> Patch {
        let mut edits = self.edits.clone();
        edits.push(edit);
        Patch { edits }
    }

    pub fn len(&self) -> usize {
        self.edits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApplyError {
    #[error("component {0} does not exist")]
    TargetMissing(ComponentId),
    #[error("{op:?} cannot be applied to {target}: {reason}")]
    Inapplicable { op: OperatorKind, target: ComponentId, reason: String },
    #[error("edit would invalidate the chart: {0}")]
    WouldInvalidate(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("edit {index}: {source}")]
pub struct PatchError {
    pub index: usize,
    pub source: ApplyError,
}

/// Token classes addressable by site index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SiteKind {
    Relational,
    Conditional,
    Math,
    AfterUnit,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum SiteValue {
    Rel(RelOp),
    Logic(LogicOp),
    Math(MathOp),
    Unit(TimeUnit),
    Num(Value),
}

/// Borrowed view of a site holder during traversal.
pub(crate) enum SiteRef<'a> {
    Connector(LogicOp),
    Node(&'a Expr),
}

enum SiteMut<'a> {
    Connector(&'a mut Option<LogicOp>),
    Node(&'a mut Expr),
}

fn site_of(kind: SiteKind, node: &Expr) -> Option<SiteValue> {
    match (kind, node) {
        (SiteKind::Relational, Expr::Binary(BinOp::Rel(op), ..)) => Some(SiteValue::Rel(*op)),
        (SiteKind::Conditional, Expr::Binary(BinOp::Logic(op), ..)) => Some(SiteValue::Logic(*op)),
        (SiteKind::Math, Expr::Binary(BinOp::Math(op), ..)) => Some(SiteValue::Math(*op)),
        (SiteKind::AfterUnit, Expr::After { unit, .. }) => Some(SiteValue::Unit(*unit)),
        (SiteKind::Numeric, Expr::Lit(v)) if v.is_numeric() => Some(SiteValue::Num(*v)),
        (SiteKind::Numeric, Expr::After { amount, .. }) => Some(SiteValue::Num(*amount)),
        _ => None,
    }
}

/// Visits the site holders of a component in site order. Guard connectors
/// are only reported for transitions, as conditional sites.
pub(crate) fn for_each_site<'a>(chart: &'a Chart, id: ComponentId, f: &mut dyn FnMut(SiteRef<'a>)) {
    match id.kind {
        ComponentKind::State => {
            if let Some(s) = chart.state(id) {
                for a in s.assignments() {
                    a.value.walk(&mut |n| f(SiteRef::Node(n)));
                }
            }
        }
        ComponentKind::Transition => {
            if let Some(g) = chart.transition(id).and_then(|t| t.guard.as_ref()) {
                for c in &g.conjuncts {
                    if let Some(op) = c.connector {
                        f(SiteRef::Connector(op));
                    }
                    c.expr.walk(&mut |n| f(SiteRef::Node(n)));
                }
            }
        }
    }
}

fn for_each_site_mut(chart: &mut Chart, id: ComponentId, f: &mut dyn FnMut(SiteMut<'_>)) {
    match id.kind {
        ComponentKind::State => {
            if let Some(s) = chart.state_mut(id) {
                for a in s.entry.iter_mut().chain(s.during.iter_mut()) {
                    a.value.walk_mut(&mut |n| f(SiteMut::Node(n)));
                }
            }
        }
        ComponentKind::Transition => {
            if let Some(g) = chart.transition_mut(id).and_then(|t| t.guard.as_mut()) {
                for c in &mut g.conjuncts {
                    if c.connector.is_some() {
                        f(SiteMut::Connector(&mut c.connector));
                    }
                    c.expr.walk_mut(&mut |n| f(SiteMut::Node(n)));
                }
            }
        }
    }
}

/// Current values of all sites of `kind` in component `id`, in site order.
#[cfg(test)]
pub(crate) fn collect_sites(chart: &Chart, id: ComponentId, kind: SiteKind) -> Vec<SiteValue> {
    let mut out = Vec::new();
    let is_transition = id.kind == ComponentKind::Transition;
    for_each_site(chart, id, &mut |site| match site {
        SiteRef::Connector(op) if kind == SiteKind::Conditional && is_transition => out.push(SiteValue::Logic(op)),
        SiteRef::Connector(_) => {}
        SiteRef::Node(n) => {
            if kind == SiteKind::Conditional && !is_transition {
                return;
            }
            if let Some(v) = site_of(kind, n) {
                out.push(v);
            }
        }
    });
    out
}

/// Replaces site `index` of `kind`, checking it currently holds `expected`.
fn replace_site(
    chart: &mut Chart,
    id: ComponentId,
    kind: SiteKind,
    index: usize,
    expected: SiteValue,
    new: SiteValue,
) -> Result<(), String> {
    let mut seen = 0usize;
    let mut outcome: Option<Result<(), String>> = None;
    for_each_site_mut(chart, id, &mut |site| {
        if outcome.is_some() {
            return;
        }
        let current = match &site {
            SiteMut::Connector(c) if kind == SiteKind::Conditional => c.map(SiteValue::Logic),
            SiteMut::Connector(_) => None,
            SiteMut::Node(n) => site_of(kind, n),
        };
        let Some(current) = current else { return };
        if seen != index {
            seen += 1;
            return;
        }
        if current != expected {
            outcome = Some(Err(format!("site {index} holds {current:?}, expected {expected:?}")));
            return;
        }
        outcome = Some(match (site, new) {
            (SiteMut::Connector(c), SiteValue::Logic(op)) => {
                *c = Some(op);
                Ok(())
            }
            (SiteMut::Node(Expr::Binary(op, ..)), SiteValue::Rel(r)) => {
                *op = BinOp::Rel(r);
                Ok(())
            }
            (SiteMut::Node(Expr::Binary(op, ..)), SiteValue::Logic(l)) => {
                *op = BinOp::Logic(l);
                Ok(())
            }
            (SiteMut::Node(Expr::Binary(op, ..)), SiteValue::Math(m)) => {
                *op = BinOp::Math(m);
                Ok(())
            }
            (SiteMut::Node(Expr::After { unit, .. }), SiteValue::Unit(u)) => {
                *unit = u;
                Ok(())
            }
            (SiteMut::Node(Expr::After { amount, .. }), SiteValue::Num(v)) => {
                *amount = v;
                Ok(())
            }
            (SiteMut::Node(node @ Expr::Lit(_)), SiteValue::Num(v)) => {
                *node = Expr::Lit(v);
                Ok(())
            }
            _ => Err("replacement does not fit the site".to_string()),
        });
    });
    outcome.unwrap_or_else(|| Err(format!("no site {index}")))
}

/// Applies one edit, returning a new chart. The input is never modified.
pub fn apply_edit(chart: &Chart, edit: &Edit) -> Result<Chart, ApplyError> {
    let target = edit.target;
    let op = edit.op;
    if !chart.contains(target) {
        return Err(ApplyError::TargetMissing(target));
    }
    let inapplicable = |reason: &str| ApplyError::Inapplicable { op, target, reason: reason.to_string() };
    if !op.applies_to(target.kind) {
        return Err(inapplicable("operator does not apply to this kind of component"));
    }
    if target.kind == ComponentKind::Transition {
        let is_initial = chart.transition(target).is_some_and(|t| t.is_initial());
        if is_initial != (op == OperatorKind::InitialTransitionChange) {
            return Err(inapplicable("initial transitions only accept InitialTransitionChange"));
        }
    }

    let mut out = chart.clone();
    use EditParams as P;
    use OperatorKind as K;
    let site_edit = |out: &mut Chart, kind, site, from, to| {
        replace_site(out, target, kind, site, from, to).map_err(|r| inapplicable(&r))
    };
    match (op, &edit.params) {
        (K::RelationalOpReplace, P::Relational { site, from, to }) => {
            site_edit(&mut out, SiteKind::Relational, *site, SiteValue::Rel(*from), SiteValue::Rel(*to))?
        }
        (K::ConditionalOpReplace, P::Conditional { site, from, to }) => {
            site_edit(&mut out, SiteKind::Conditional, *site, SiteValue::Logic(*from), SiteValue::Logic(*to))?
        }
        (K::MathOpReplace, P::Math { site, from, to }) => {
            site_edit(&mut out, SiteKind::Math, *site, SiteValue::Math(*from), SiteValue::Math(*to))?
        }
        (K::AfterUnitChange, P::AfterUnit { site, from, to }) => {
            site_edit(&mut out, SiteKind::AfterUnit, *site, SiteValue::Unit(*from), SiteValue::Unit(*to))?
        }
        (K::NumericReplace, P::Numeric { site, from, to }) => {
            if from.ty() != to.ty() {
                return Err(inapplicable("numeric replacement must preserve the literal type"));
            }
            site_edit(&mut out, SiteKind::Numeric, *site, SiteValue::Num(*from), SiteValue::Num(*to))?
        }
        (K::TransitionDestReplace, P::Retarget { to }) => {
            out.transition_mut(target).expect("checked").dest = *to;
        }
        (K::TransitionRootReplace, P::Retarget { to }) => {
            out.transition_mut(target).expect("checked").source = Source::State(*to);
        }
        (K::InitialTransitionChange, P::Retarget { to }) => {
            out.transition_mut(target).expect("checked").dest = *to;
        }
        (K::StateDelete, P::Delete) => {
            if chart.initial().is_some_and(|t| t.dest == target) {
                return Err(ApplyError::WouldInvalidate("cannot delete the initial state".into()));
            }
            out.states.retain(|s| s.id != target);
            out.transitions.retain(|t| t.dest != target && t.source != Source::State(target));
        }
        (K::TransitionDelete, P::Delete) => {
            out.transitions.retain(|t| t.id != target);
        }
        (K::StateVarDelete, P::DeleteAssignment { block, index }) => {
            let s = out.state_mut(target).expect("checked");
            let list = match block {
                Block::Entry => &mut s.entry,
                Block::During => &mut s.during,
            };
            if *index >= list.len() {
                return Err(inapplicable("no such assignment"));
            }
            list.remove(*index);
        }
        (K::TransitionCondDelete, P::DeleteCondition { index }) => {
            let guard = out.transition_mut(target).and_then(|t| t.guard.as_mut()).expect("checked");
            if guard.conjuncts.len() < 2 {
                return Err(inapplicable("guard has a single condition"));
            }
            if *index >= guard.conjuncts.len() {
                return Err(inapplicable("no such condition"));
            }
            guard.conjuncts.remove(*index);
            guard.conjuncts[0].connector = None;
        }
        (K::MathOpInsert | K::VarInsert, P::InsertAssignment { block, assignment }) => {
            let s = out.state_mut(target).expect("checked");
            match block {
                Block::Entry => s.entry.push(assignment.clone()),
                Block::During => s.during.push(assignment.clone()),
            }
        }
        (K::CondInsert, P::InsertCondition { connector, expr }) => {
            let guard = out.transition_mut(target).and_then(|t| t.guard.as_mut()).expect("checked");
            guard.conjuncts.push(Conjunct { connector: Some(*connector), expr: expr.clone() });
        }
        _ => return Err(inapplicable("parameters do not match the operator")),
    }

    if let Some(d) = validate(&out).into_iter().next() {
        return Err(ApplyError::WouldInvalidate(d.to_string()));
    }
    Ok(out)
}

/// Replays `patch` on `chart`, stopping at the first failing edit.
pub fn apply_patch(chart: &Chart, patch: &Patch) -> Result<Chart, PatchError> {
    let mut current = chart.clone();
    for (index, edit) in patch.edits.iter().enumerate() {
        current = apply_edit(&current, edit).map_err(|source| PatchError { index, source })?;
    }
    Ok(current)
}
