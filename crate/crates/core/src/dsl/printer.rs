use std::fmt::Write;

use crate::model::{Assignment, BinOp, Chart, Expr, Guard, LogicOp, RelOp, Source, UnaryOp, Value};

const INDENT: &str = "    ";

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinOp::Logic(LogicOp::Or), ..) => 1,
        Expr::Binary(BinOp::Logic(LogicOp::And), ..) => 2,
        Expr::Binary(BinOp::Rel(RelOp::Eq | RelOp::Ne), ..) => 3,
        Expr::Binary(BinOp::Rel(_), ..) => 4,
        Expr::Binary(BinOp::Math(op), ..) => match op {
            crate::model::MathOp::Add | crate::model::MathOp::Sub => 5,
            _ => 6,
        },
        Expr::Unary(..) => 7,
        Expr::Lit(_) | Expr::Var(_) | Expr::After { .. } => 8,
    }
}

fn write_expr(out: &mut String, e: &Expr, min_prec: u8) {
    let p = precedence(e);
    let paren = p < min_prec;
    if paren {
        out.push('(');
    }
    match e {
        Expr::Lit(v) => write_lit(out, *v),
        Expr::Var(name) => out.push_str(name),
        Expr::After { amount, unit } => {
            let _ = write!(out, "after({amount}, {})", unit.keyword());
        }
        Expr::Unary(op, inner) => {
            out.push(match op {
                UnaryOp::Neg => '-',
                UnaryOp::Not => '!',
            });
            // `-5` would re-parse as a single negative literal.
            if matches!((op, inner.as_ref()), (UnaryOp::Neg, Expr::Lit(_))) {
                out.push('(');
                write_expr(out, inner, 0);
                out.push(')');
            } else {
                write_expr(out, inner, 7);
            }
        }
        Expr::Binary(op, l, r) => {
            write_expr(out, l, p);
            let _ = write!(out, " {} ", op.token());
            write_expr(out, r, p + 1);
        }
    }
    if paren {
        out.push(')');
    }
}

fn write_lit(out: &mut String, v: Value) {
    let _ = write!(out, "{v}");
}

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

pub(crate) fn print_guard(g: &Guard) -> String {
    let mut s = String::new();
    for c in &g.conjuncts {
        if let Some(op) = c.connector {
            let _ = write!(s, " {} ", op.token());
        }
        // Top-level `&&`/`||` inside a condition must stay grouped.
        write_expr(&mut s, &c.expr, 3);
    }
    s
}

fn write_block(out: &mut String, keyword: &str, body: &[Assignment]) {
    if body.is_empty() {
        return;
    }
    let _ = writeln!(out, "{INDENT}{INDENT}{keyword} {{");
    for a in body {
        let _ = writeln!(out, "{INDENT}{INDENT}{INDENT}{} = {};", a.target, print_expr(&a.value));
    }
    let _ = writeln!(out, "{INDENT}{INDENT}}}");
}

/// Canonical text form of a chart.
pub fn serialize(chart: &Chart) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "chart {} {{", chart.name);
    for v in &chart.vars {
        let _ = write!(out, "{INDENT}{} {}: {}", v.kind.keyword(), v.name, v.ty.keyword());
        if let Some(init) = v.init {
            out.push_str(" = ");
            write_lit(&mut out, init);
        }
        out.push_str(";\n");
    }
    if !chart.vars.is_empty() {
        out.push('\n');
    }
    for s in &chart.states {
        if s.entry.is_empty() && s.during.is_empty() {
            let _ = writeln!(out, "{INDENT}state {} {{}}", s.name);
            continue;
        }
        let _ = writeln!(out, "{INDENT}state {} {{", s.name);
        write_block(&mut out, "entry", &s.entry);
        write_block(&mut out, "during", &s.during);
        let _ = writeln!(out, "{INDENT}}}");
    }
    if !chart.states.is_empty() && !chart.transitions.is_empty() {
        out.push('\n');
    }
    let name = |id| chart.state(id).map_or("?", |s| s.name.as_str());
    for t in &chart.transitions {
        match (t.source, &t.guard) {
            (Source::Initial, _) => {
                let _ = writeln!(out, "{INDENT}initial -> {};", name(t.dest));
            }
            (Source::State(src), Some(g)) => {
                let _ = writeln!(out, "{INDENT}transition {} -> {} when [{}];", name(src), name(t.dest), print_guard(g));
            }
            (Source::State(src), None) => {
                let _ = writeln!(out, "{INDENT}transition {} -> {} when [];", name(src), name(t.dest));
            }
        }
    }
    out.push_str("}\n");
    out
}
