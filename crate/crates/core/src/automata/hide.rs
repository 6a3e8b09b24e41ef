use std::collections::{BTreeMap, BTreeSet};

use super::guard::{Atom, Classes, Guard, Term};
use super::{AutomataError, ConstraintAutomaton};

/// Removes `hidden` ports from the automaton.
///
/// Hidden ports leave every sync set. Guard terms over hidden ports are
/// eliminated per conjunct by equality saturation: each equality class that
/// contains a hidden term is rebuilt as equalities between a visible
/// representative and the remaining visible terms. Afterwards memory cells
/// that no visible port or literal can ever observe are projected out, and
/// silent `True` transitions are collapsed where that cannot change the
/// observable behaviour (see [`ConstraintAutomaton::silent_transitions`] for
/// the ones that remain).
pub fn hide(
    a: &ConstraintAutomaton,
    hidden: &BTreeSet<String>,
) -> Result<ConstraintAutomaton, AutomataError> {
    if let Some(p) = hidden.iter().find(|p| !a.ports.contains_key(*p)) {
        return Err(AutomataError::UnknownPort(p.clone()));
    }
    // unreachable transitions must not be able to make hiding fail
    let a = &a.reachable();
    if hidden.is_empty() {
        return Ok(a.clone());
    }
    let mut out = a.clone();
    out.ports.retain(|p, _| !hidden.contains(p));
    let mut transitions = Vec::with_capacity(a.transitions.len());
    for t in &a.transitions {
        let mut conjs = Vec::new();
        for conj in t.guard.dnf() {
            if let Some(c) = eliminate(&conj, hidden)? {
                conjs.push(c);
            }
        }
        if conjs.is_empty() {
            continue;
        }
        let mut t = t.clone();
        t.sync.retain(|p| !hidden.contains(p));
        t.guard = Guard::from_dnf(conjs).normalize();
        transitions.push(t);
    }
    out.transitions = transitions;

    drop_unobservable_cells(&mut out);
    out.dedup_transitions();
    collapse_silent(&mut out);
    Ok(out.reachable())
}

fn is_hidden(t: &Term, hidden: &BTreeSet<String>) -> bool {
    matches!(t, Term::Port(p) if hidden.contains(p))
}

/// Eliminates hidden port terms from one conjunction. `Ok(None)` means the
/// conjunction became unsatisfiable.
fn eliminate(atoms: &[Atom], hidden: &BTreeSet<String>) -> Result<Option<Vec<Atom>>, AutomataError> {
    let classes = Classes::from_atoms(atoms);
    let mut rebuilt: BTreeMap<usize, Option<Term>> = BTreeMap::new();
    let mut out: BTreeSet<Atom> = BTreeSet::new();

    for (root, terms) in classes.groups() {
        let literals: BTreeSet<&Term> = terms.iter().filter(|t| matches!(t, Term::Lit(_))).collect();
        if literals.len() > 1 {
            return Ok(None);
        }
        let Some(first_hidden) = terms.iter().find(|t| is_hidden(t, hidden)) else {
            continue;
        };
        // terms are sorted in canonical order: ports, literals, pre, post
        let visible: Vec<&Term> = terms.iter().filter(|t| !is_hidden(t, hidden)).collect();
        let rep = match visible.first() {
            None => None,
            Some(Term::MemPost(_)) => {
                let Term::Port(port) = first_hidden else { unreachable!() };
                return Err(AutomataError::ResidualHidden { port: port.clone() });
            }
            Some(&rep) => {
                for t in &visible[1..] {
                    out.insert(Atom::Eq(rep.clone(), (*t).clone()));
                }
                Some(rep.clone())
            }
        };
        rebuilt.insert(root, rep);
    }

    let rewrite = |t: &Term| -> Result<Term, AutomataError> {
        if !is_hidden(t, hidden) {
            return Ok(t.clone());
        }
        let root = classes.root_of(t).expect("term registered");
        match rebuilt.get(&root) {
            Some(Some(rep)) => Ok(rep.clone()),
            _ => {
                let Term::Port(port) = t else { unreachable!() };
                Err(AutomataError::ResidualHidden { port: port.clone() })
            }
        }
    };

    for atom in atoms {
        match atom {
            Atom::Eq(x, _) => {
                let root = classes.root_of(x).expect("term registered");
                if !rebuilt.contains_key(&root) {
                    out.insert(atom.clone());
                }
            }
            Atom::Neq(x, y) => {
                let (x, y) = (rewrite(x)?, rewrite(y)?);
                if x == y {
                    return Ok(None);
                }
                if matches!((&x, &y), (Term::Lit(_), Term::Lit(_))) {
                    continue;
                }
                out.insert(Atom::Neq(x, y));
            }
        }
    }
    Ok(Some(out.into_iter().collect()))
}

/// Projects out cells whose contents can never reach a visible port: every
/// equality class mentioning them holds only such cells, at most one
/// pre-value, and no disequality touches them.
fn drop_unobservable_cells(a: &mut ConstraintAutomaton) {
    let mut candidates: BTreeSet<String> = a.cells.keys().cloned().collect();
    let dnfs: Vec<Vec<Vec<Atom>>> = a.transitions.iter().map(|t| t.guard.dnf()).collect();
    loop {
        let before = candidates.len();
        for conj in dnfs.iter().flatten() {
            let classes = Classes::from_atoms(conj);
            for terms in classes.groups().values() {
                let touches = terms
                    .iter()
                    .any(|t| t.cell().is_some_and(|c| candidates.contains(c)));
                if !touches {
                    continue;
                }
                let foreign = terms
                    .iter()
                    .any(|t| !t.cell().is_some_and(|c| candidates.contains(c)));
                let pres = terms.iter().filter(|t| matches!(t, Term::MemPre(_))).count();
                if foreign || pres > 1 {
                    for t in terms {
                        if let Some(c) = t.cell() {
                            candidates.remove(c);
                        }
                    }
                }
            }
            for atom in conj {
                if let Atom::Neq(x, y) = atom {
                    for t in [x, y] {
                        if let Some(c) = t.cell() {
                            candidates.remove(c);
                        }
                    }
                }
            }
        }
        if candidates.len() == before {
            break;
        }
    }
    if candidates.is_empty() {
        return;
    }
    a.cells.retain(|c, _| !candidates.contains(c));
    for (t, dnf) in a.transitions.iter_mut().zip(dnfs) {
        let mentions = t
            .guard
            .terms()
            .iter()
            .any(|term| term.cell().is_some_and(|c| candidates.contains(c)));
        if !mentions {
            continue;
        }
        let conjs = dnf
            .into_iter()
            .map(|conj| {
                conj.into_iter()
                    .filter(|atom| {
                        !atom
                            .terms()
                            .iter()
                            .any(|term| term.cell().is_some_and(|c| candidates.contains(c)))
                    })
                    .collect()
            })
            .collect();
        t.guard = Guard::from_dnf(conjs).normalize();
    }
}

/// Removes silent `True` self-loops, and merges `q` into `p` when a silent
/// `True` transition `q -> p` is the only way out of `q`.
fn collapse_silent(a: &mut ConstraintAutomaton) {
    loop {
        let found = a
            .transitions
            .iter()
            .position(|t| t.is_silent() && t.guard.normalize().is_true() && {
                t.from == t.to || a.outgoing(t.from).count() == 1
            });
        let Some(i) = found else { break };
        let t = a.transitions.remove(i);
        if t.from == t.to {
            continue;
        }
        let (q, p) = (t.from, t.to);
        for other in &mut a.transitions {
            if other.to == q {
                other.to = p;
            }
        }
        if a.initial == q {
            a.initial = p;
        }
        a.dedup_transitions();
    }
}
