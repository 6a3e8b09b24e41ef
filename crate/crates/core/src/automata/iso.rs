use std::collections::{BTreeMap, BTreeSet};

use super::{ConstraintAutomaton, Guard, StateId};

type Label = (BTreeSet<String>, Guard);

/// Finds an isomorphism between the reachable parts of `a` and `b`.
///
/// Ports must coincide by name and direction. Cells may be renamed, but a
/// cell's initial value must be preserved. Transitions are compared by sync
/// set and normalized guard. On success returns, for each reachable state of
/// `a` (in `a.reachable()` numbering), its image in `b.reachable()`.
pub fn isomorphic(a: &ConstraintAutomaton, b: &ConstraintAutomaton) -> Option<Vec<StateId>> {
    let (a, b) = (a.reachable(), b.reachable());
    if a.ports != b.ports
        || a.cells.len() != b.cells.len()
        || a.states.len() != b.states.len()
        || a.transitions.len() != b.transitions.len()
    {
        return None;
    }
    if a.states.is_empty() {
        return Some(Vec::new());
    }
    let a_cells: Vec<&String> = a.cells.keys().collect();
    let b_cells: Vec<&String> = b.cells.keys().collect();
    let mut found = None;
    permutations(b_cells.len(), &mut |perm| {
        let ok = a_cells
            .iter()
            .zip(perm)
            .all(|(ca, &j)| a.cells[*ca] == b.cells[b_cells[j]]);
        if !ok {
            return false;
        }
        let renaming: BTreeMap<String, String> = a_cells
            .iter()
            .zip(perm)
            .map(|(ca, &j)| ((*ca).clone(), b_cells[j].clone()))
            .collect();
        found = match_states(&a, &b, &renaming);
        found.is_some()
    });
    found
}

/// Calls `f` with each permutation of `0..n` until it returns true.
fn permutations(n: usize, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    fn go(perm: &mut Vec<usize>, used: &mut Vec<bool>, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        if perm.len() == used.len() {
            return f(perm);
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                perm.push(i);
                if go(perm, used, f) {
                    return true;
                }
                perm.pop();
                used[i] = false;
            }
        }
        false
    }
    go(&mut Vec::new(), &mut vec![false; n], f)
}

struct Side {
    // per state: outgoing (label, target)
    out: Vec<Vec<(Label, StateId)>>,
}

impl Side {
    fn new(ca: &ConstraintAutomaton, renaming: Option<&BTreeMap<String, String>>) -> Side {
        let mut out = vec![Vec::new(); ca.states.len()];
        for t in &ca.transitions {
            let guard = match renaming {
                Some(r) => t.guard.rename_cells(r).normalize(),
                None => t.guard.normalize(),
            };
            out[t.from.0].push(((t.sync.clone(), guard), t.to));
        }
        Side { out }
    }

    fn labels(&self, s: StateId) -> BTreeMap<&Label, usize> {
        let mut m = BTreeMap::new();
        for (l, _) in &self.out[s.0] {
            *m.entry(l).or_insert(0) += 1;
        }
        m
    }
}

fn match_states(
    a: &ConstraintAutomaton,
    b: &ConstraintAutomaton,
    renaming: &BTreeMap<String, String>,
) -> Option<Vec<StateId>> {
    let sa = Side::new(a, Some(renaming));
    let sb = Side::new(b, None);

    // BFS spanning tree of a: each non-initial state with its discovering
    // parent and the label used
    let order = a.bfs_order();
    let mut parent: Vec<Option<(StateId, Label)>> = vec![None; a.states.len()];
    let mut seen = vec![false; a.states.len()];
    seen[a.initial.0] = true;
    for &s in &order {
        for (l, t) in &sa.out[s.0] {
            if !seen[t.0] {
                seen[t.0] = true;
                parent[t.0] = Some((s, l.clone()));
            }
        }
    }

    let mut map: Vec<Option<StateId>> = vec![None; a.states.len()];
    let mut used = vec![false; b.states.len()];
    if sa.labels(a.initial) != sb.labels(b.initial) {
        return None;
    }
    map[a.initial.0] = Some(b.initial);
    used[b.initial.0] = true;

    fn assign(
        i: usize,
        order: &[StateId],
        parent: &[Option<(StateId, Label)>],
        sa: &Side,
        sb: &Side,
        map: &mut Vec<Option<StateId>>,
        used: &mut Vec<bool>,
    ) -> bool {
        if i == order.len() {
            return consistent(sa, sb, map);
        }
        let s = order[i];
        let (p, label) = parent[s.0].as_ref().expect("non-initial state has a parent");
        let image_p = map[p.0].expect("parent mapped first");
        let candidates: BTreeSet<StateId> = sb.out[image_p.0]
            .iter()
            .filter(|(l, t)| l == label && !used[t.0])
            .map(|(_, t)| *t)
            .collect();
        for c in candidates {
            if sa.labels(s) != sb.labels(c) {
                continue;
            }
            map[s.0] = Some(c);
            used[c.0] = true;
            if assign(i + 1, order, parent, sa, sb, map, used) {
                return true;
            }
            map[s.0] = None;
            used[c.0] = false;
        }
        false
    }

    if assign(1, &order, &parent, &sa, &sb, &mut map, &mut used) {
        Some(map.into_iter().map(|s| s.expect("all states mapped")).collect())
    } else {
        None
    }
}

fn consistent(sa: &Side, sb: &Side, map: &[Option<StateId>]) -> bool {
    sa.out.iter().enumerate().all(|(s, outs)| {
        let image = map[s].expect("mapped");
        let mut mine: Vec<(&Label, StateId)> =
            outs.iter().map(|(l, t)| (l, map[t.0].expect("mapped"))).collect();
        let mut theirs: Vec<(&Label, StateId)> = sb.out[image.0].iter().map(|(l, t)| (l, *t)).collect();
        mine.sort();
        theirs.sort();
        mine == theirs
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::{Direction, Term};
    use crate::connector::Literal;
    use crate::fixtures;

    fn shuffled(a: &ConstraintAutomaton, perm: &[usize]) -> ConstraintAutomaton {
        // state i of `a` becomes state perm[i]
        let mut out = a.clone();
        out.states = vec![String::new(); a.states.len()];
        for (i, l) in a.states.iter().enumerate() {
            out.states[perm[i]] = format!("{l}'");
        }
        out.initial = StateId(perm[a.initial.0]);
        for t in &mut out.transitions {
            t.from = StateId(perm[t.from.0]);
            t.to = StateId(perm[t.to.0]);
        }
        out.transitions.reverse();
        out
    }

    #[test]
    fn relabelled_copy_is_isomorphic() {
        let a = fixtures::sequencer_automaton();
        let b = shuffled(&a, &[2, 0, 3, 1]);
        let m = isomorphic(&a, &b).expect("isomorphic");
        assert_eq!(m, vec![StateId(2), StateId(0), StateId(3), StateId(1)]);
    }

    #[test]
    fn cell_renaming_allowed_but_not_init_change() {
        let a = fixtures::sequencer_automaton();
        let mut b = a.clone();
        b.cells = [("buf".to_string(), None)].into();
        let r: BTreeMap<String, String> = [("m".to_string(), "buf".to_string())].into();
        for t in &mut b.transitions {
            t.guard = t.guard.rename_cells(&r);
        }
        assert!(isomorphic(&a, &b).is_some());
        b.cells.insert("buf".into(), Some(Literal::str("x")));
        assert!(isomorphic(&a, &b).is_none());
    }

    #[test]
    fn guard_difference_detected() {
        let a = fixtures::sequencer_automaton();
        let mut b = a.clone();
        b.transitions[0].guard = Guard::eq(Term::port("A"), Term::str("bar"));
        assert!(isomorphic(&a, &b).is_none());
    }

    #[test]
    fn port_direction_matters() {
        let a = fixtures::merger_automaton();
        let mut b = a.clone();
        b.ports.insert("A".into(), Direction::Output);
        assert!(isomorphic(&a, &b).is_none());
    }

    #[test]
    fn alternator_not_isomorphic_to_merger() {
        assert!(isomorphic(&fixtures::merger_automaton(), &fixtures::alternator_automaton()).is_none());
    }
}
