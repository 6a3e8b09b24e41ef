use std::collections::{BTreeSet, HashMap, VecDeque};

use super::{AutomataError, ConstraintAutomaton, Direction, Guard, StateId, Transition};

fn shared(sync: &BTreeSet<String>, other: &ConstraintAutomaton) -> BTreeSet<String> {
    sync.iter()
        .filter(|p| other.ports.contains_key(*p))
        .cloned()
        .collect()
}

/// Synchronous product. Two transitions fuse when they agree on the ports the
/// operands share (`N1 ∩ ports(b) = N2 ∩ ports(a)`); a transition fires alone
/// when it touches none of the other operand's ports. Only states reachable
/// from the pair of initial states are built.
pub fn product(
    a: &ConstraintAutomaton,
    b: &ConstraintAutomaton,
) -> Result<ConstraintAutomaton, AutomataError> {
    if let Some(c) = a.cells.keys().find(|c| b.cells.contains_key(*c)) {
        return Err(AutomataError::CellClash(c.clone()));
    }
    let mut ports = a.ports.clone();
    for (p, &d) in &b.ports {
        let merged = match (ports.get(p).copied(), d) {
            (None, d) => d,
            (Some(x), y) if x == y => x,
            (Some(Direction::Internal), y) => y,
            (Some(x), Direction::Internal) => x,
            _ => return Err(AutomataError::DirectionClash(p.clone())),
        };
        ports.insert(p.clone(), merged);
    }
    let mut cells = a.cells.clone();
    cells.extend(b.cells.iter().map(|(k, v)| (k.clone(), v.clone())));

    let mut out = ConstraintAutomaton {
        name: format!("{}*{}", a.name, b.name),
        ports,
        cells,
        states: Vec::new(),
        initial: StateId(0),
        transitions: Vec::new(),
    };
    if a.states.is_empty() || b.states.is_empty() {
        return Ok(out);
    }

    // per-transition shared-port projections, computed once
    let a_shared: Vec<BTreeSet<String>> =
        a.transitions.iter().map(|t| shared(&t.sync, b)).collect();
    let b_shared: Vec<BTreeSet<String>> =
        b.transitions.iter().map(|t| shared(&t.sync, a)).collect();
    let mut a_out: Vec<Vec<usize>> = vec![Vec::new(); a.states.len()];
    for (i, t) in a.transitions.iter().enumerate() {
        a_out[t.from.0].push(i);
    }
    let mut b_out: Vec<Vec<usize>> = vec![Vec::new(); b.states.len()];
    for (i, t) in b.transitions.iter().enumerate() {
        b_out[t.from.0].push(i);
    }

    let mut index: HashMap<(StateId, StateId), StateId> = HashMap::new();
    let mut queue = VecDeque::new();
    let mut intern = |pair: (StateId, StateId),
                      out: &mut ConstraintAutomaton,
                      queue: &mut VecDeque<(StateId, StateId)>|
     -> StateId {
        *index.entry(pair).or_insert_with(|| {
            queue.push_back(pair);
            out.add_state(format!(
                "({},{})",
                a.state_label(pair.0),
                b.state_label(pair.1)
            ))
        })
    };
    let start = intern((a.initial, b.initial), &mut out, &mut queue);
    out.initial = start;

    while let Some((qa, qb)) = queue.pop_front() {
        let from = intern((qa, qb), &mut out, &mut queue);
        let mut new = Vec::new();
        for &i in &a_out[qa.0] {
            let ta = &a.transitions[i];
            if a_shared[i].is_empty() {
                new.push(((ta.to, qb), ta.sync.clone(), ta.guard.clone()));
            }
            for &j in &b_out[qb.0] {
                if a_shared[i] == b_shared[j] {
                    let tb = &b.transitions[j];
                    let sync = ta.sync.union(&tb.sync).cloned().collect();
                    let guard = Guard::and([ta.guard.clone(), tb.guard.clone()]);
                    new.push(((ta.to, tb.to), sync, guard));
                }
            }
        }
        for &j in &b_out[qb.0] {
            let tb = &b.transitions[j];
            if b_shared[j].is_empty() {
                new.push(((qa, tb.to), tb.sync.clone(), tb.guard.clone()));
            }
        }
        for (target, sync, guard) in new {
            let to = intern(target, &mut out, &mut queue);
            out.transitions.push(Transition {
                from,
                to,
                sync,
                guard,
            });
        }
    }
    out.dedup_transitions();
    Ok(out)
}
