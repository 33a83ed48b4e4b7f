use std::fmt::Write;

use similar::TextDiff;

use super::serialize;
use crate::model::{Chart, ComponentId, ComponentKind};

fn content_differs(a: &Chart, b: &Chart, id: ComponentId) -> bool {
    match id.kind {
        ComponentKind::State => a.state(id) != b.state(id),
        ComponentKind::Transition => a.transition(id) != b.transition(id),
    }
}

/// Unified diff of the canonical forms, preceded by one `# <id> ...` line
/// per component that was modified, removed or added. Empty when the charts
/// serialize identically.
pub fn render_diff(original: &Chart, patched: &Chart) -> String {
    let before = serialize(original);
    let after = serialize(patched);
    if before == after {
        return String::new();
    }
    let mut out = String::new();
    for (id, _) in original.components() {
        if !patched.contains(id) {
            let _ = writeln!(out, "# {id} {} (removed)", original.label(id));
        } else if content_differs(original, patched, id) {
            let _ = writeln!(out, "# {id} {} (modified)", patched.label(id));
        }
    }
    for (id, _) in patched.components() {
        if !original.contains(id) {
            let _ = writeln!(out, "# {id} {} (added)", patched.label(id));
        }
    }
    let diff = TextDiff::from_lines(&before, &after);
    let _ = write!(out, "{}", diff.unified_diff().context_radius(2).header("original", "patched"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;
    use crate::model::{apply_edit, Edit, EditParams, RelOp};
    use crate::mutate::OperatorKind;

    const FRIDGE: &str = include_str!("../../../../corpus/fridge_1.fixed.chart");

    fn changed_lines(diff: &str) -> (Vec<&str>, Vec<&str>) {
        let removed = diff.lines().filter(|l| l.starts_with('-') && !l.starts_with("---")).collect();
        let added = diff.lines().filter(|l| l.starts_with('+') && !l.starts_with("+++")).collect();
        (removed, added)
    }

    #[test]
    fn identical_charts_give_empty_diff() {
        let c = parse(FRIDGE).unwrap();
        assert_eq!(render_diff(&c, &c.clone()), "");
    }

    #[test]
    fn single_token_edit_is_one_line_pair() {
        let c = parse(FRIDGE).unwrap();
        let hot = c.transitions.iter().find(|t| c.label(t.id) == "CLOSE_NORM -> CLOSE_HOT").unwrap().id;
        let e = Edit {
            op: OperatorKind::RelationalOpReplace,
            target: hot,
            params: EditParams::Relational { site: 0, from: RelOp::Gt, to: RelOp::Ge },
        };
        let d = render_diff(&c, &apply_edit(&c, &e).unwrap());
        let (removed, added) = changed_lines(&d);
        assert_eq!((removed.len(), added.len()), (1, 1), "{d}");
        assert!(d.starts_with(&format!("# {hot} CLOSE_NORM -> CLOSE_HOT (modified)\n")));
    }

    #[test]
    fn state_deletion_removes_block_and_incident_transitions() {
        let c = parse(FRIDGE).unwrap();
        let s = c.state_by_name("OPEN_15_SEC").unwrap().id;
        let e = Edit { op: OperatorKind::StateDelete, target: s, params: EditParams::Delete };
        let d = render_diff(&c, &apply_edit(&c, &e).unwrap());
        let (removed, added) = changed_lines(&d);
        assert!(added.is_empty(), "{d}");
        // state header, entry header, one assignment, two closing braces, two transitions
        assert_eq!(removed.len(), 7, "{d}");
        assert_eq!(removed.iter().filter(|l| l.contains("transition")).count(), 2);
        assert_eq!(d.lines().filter(|l| l.ends_with("(removed)")).count(), 3);
    }
}
