//! Data constraints: terms, guard expressions, evaluation, and the
//! equality-class solver shared by trace enumeration and the runtime.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::connector::Literal;

/// Value of a memory cell; `None` is the empty cell.
pub type CellValue = Option<Literal>;

/// Operand of a data constraint. The derived ordering (ports, literals,
/// memory-pre, memory-post) is the canonical term ordering.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    /// Datum passing a port, written `[A]`.
    Port(String),
    Lit(Literal),
    /// Cell content before the transition, written `m`.
    MemPre(String),
    /// Cell content after the transition, written `m'`.
    MemPost(String),
}

impl Term {
    pub fn port(p: &str) -> Self {
        Term::Port(p.to_string())
    }
    pub fn pre(c: &str) -> Self {
        Term::MemPre(c.to_string())
    }
    pub fn post(c: &str) -> Self {
        Term::MemPost(c.to_string())
    }
    pub fn str(s: &str) -> Self {
        Term::Lit(Literal::str(s))
    }

    pub fn cell(&self) -> Option<&str> {
        match self {
            Term::MemPre(c) | Term::MemPost(c) => Some(c),
            _ => None,
        }
    }

    fn rename_cells(&self, map: &BTreeMap<String, String>) -> Term {
        match self {
            Term::MemPre(c) => Term::MemPre(map.get(c).cloned().unwrap_or_else(|| c.clone())),
            Term::MemPost(c) => Term::MemPost(map.get(c).cloned().unwrap_or_else(|| c.clone())),
            t => t.clone(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Port(p) => write!(f, "[{p}]"),
            Term::Lit(l) => write!(f, "{l}"),
            Term::MemPre(c) => write!(f, "{c}"),
            Term::MemPost(c) => write!(f, "{c}'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Guard {
    True,
    Eq(Term, Term),
    Neq(Term, Term),
    And(Vec<Guard>),
    /// `Or(vec![])` is unsatisfiable.
    Or(Vec<Guard>),
}

impl Guard {
    pub fn eq(a: Term, b: Term) -> Self {
        Guard::Eq(a, b)
    }
    pub fn neq(a: Term, b: Term) -> Self {
        Guard::Neq(a, b)
    }

    /// Conjunction, flattening nested `And` and dropping `True`.
    pub fn and(parts: impl IntoIterator<Item = Guard>) -> Guard {
        let mut out = Vec::new();
        for g in parts {
            match g {
                Guard::True => {}
                Guard::And(cs) => out.extend(cs),
                g => out.push(g),
            }
        }
        match out.len() {
            0 => Guard::True,
            1 => out.pop().unwrap(),
            _ => Guard::And(out),
        }
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Guard::True) || matches!(self, Guard::And(cs) if cs.is_empty())
    }

    pub fn terms(&self) -> Vec<&Term> {
        let mut out = Vec::new();
        self.collect_terms(&mut out);
        out
    }

    fn collect_terms<'a>(&'a self, out: &mut Vec<&'a Term>) {
        match self {
            Guard::True => {}
            Guard::Eq(a, b) | Guard::Neq(a, b) => {
                out.push(a);
                out.push(b);
            }
            Guard::And(cs) | Guard::Or(cs) => cs.iter().for_each(|c| c.collect_terms(out)),
        }
    }

    pub fn ports(&self) -> BTreeSet<&str> {
        self.terms()
            .into_iter()
            .filter_map(|t| match t {
                Term::Port(p) => Some(p.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn literals(&self) -> BTreeSet<Literal> {
        self.terms()
            .into_iter()
            .filter_map(|t| match t {
                Term::Lit(l) => Some(l.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn rename_cells(&self, map: &BTreeMap<String, String>) -> Guard {
        match self {
            Guard::True => Guard::True,
            Guard::Eq(a, b) => Guard::Eq(a.rename_cells(map), b.rename_cells(map)),
            Guard::Neq(a, b) => Guard::Neq(a.rename_cells(map), b.rename_cells(map)),
            Guard::And(cs) => Guard::And(cs.iter().map(|c| c.rename_cells(map)).collect()),
            Guard::Or(cs) => Guard::Or(cs.iter().map(|c| c.rename_cells(map)).collect()),
        }
    }

    /// Canonical form: nested `And`/`Or` flattened, children sorted and
    /// deduplicated, equality operands ordered, unit conjunctions removed.
    pub fn normalize(&self) -> Guard {
        match self {
            Guard::True => Guard::True,
            Guard::Eq(a, b) if a <= b => Guard::Eq(a.clone(), b.clone()),
            Guard::Eq(a, b) => Guard::Eq(b.clone(), a.clone()),
            Guard::Neq(a, b) if a <= b => Guard::Neq(a.clone(), b.clone()),
            Guard::Neq(a, b) => Guard::Neq(b.clone(), a.clone()),
            Guard::And(cs) => {
                let mut out = BTreeSet::new();
                for c in cs {
                    match c.normalize() {
                        Guard::True => {}
                        Guard::And(inner) => out.extend(inner),
                        g => {
                            out.insert(g);
                        }
                    }
                }
                let mut out: Vec<Guard> = out.into_iter().collect();
                match out.len() {
                    0 => Guard::True,
                    1 => out.pop().unwrap(),
                    _ => Guard::And(out),
                }
            }
            Guard::Or(cs) => {
                let mut out = BTreeSet::new();
                for c in cs {
                    match c.normalize() {
                        Guard::True => return Guard::True,
                        Guard::Or(inner) => out.extend(inner),
                        g => {
                            out.insert(g);
                        }
                    }
                }
                let mut out: Vec<Guard> = out.into_iter().collect();
                if out.len() == 1 {
                    out.pop().unwrap()
                } else {
                    Guard::Or(out)
                }
            }
        }
    }

    /// Disjunctive normal form: a list of conjunctions of atoms. `True` is a
    /// single empty conjunction; `Or([])` is the empty list.
    pub fn dnf(&self) -> Vec<Vec<Atom>> {
        match self {
            Guard::True => vec![vec![]],
            Guard::Eq(a, b) => vec![vec![Atom::Eq(a.clone(), b.clone())]],
            Guard::Neq(a, b) => vec![vec![Atom::Neq(a.clone(), b.clone())]],
            Guard::Or(cs) => cs.iter().flat_map(|c| c.dnf()).collect(),
            Guard::And(cs) => {
                let mut acc: Vec<Vec<Atom>> = vec![vec![]];
                for c in cs {
                    let d = c.dnf();
                    let mut next = Vec::with_capacity(acc.len() * d.len());
                    for left in &acc {
                        for right in &d {
                            let mut conj = left.clone();
                            conj.extend(right.iter().cloned());
                            next.push(conj);
                        }
                    }
                    acc = next;
                }
                acc
            }
        }
    }

    /// Rebuilds a guard from DNF.
    pub fn from_dnf(dnf: Vec<Vec<Atom>>) -> Guard {
        let mut disjuncts: Vec<Guard> = dnf
            .into_iter()
            .map(|conj| Guard::and(conj.into_iter().map(Atom::into_guard)))
            .collect();
        if disjuncts.len() == 1 {
            disjuncts.pop().unwrap()
        } else {
            Guard::Or(disjuncts)
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::True => f.write_str("true"),
            Guard::Eq(a, b) => write!(f, "{a}={b}"),
            Guard::Neq(a, b) => write!(f, "{a}≠{b}"),
            Guard::And(cs) if cs.is_empty() => f.write_str("true"),
            Guard::Or(cs) if cs.is_empty() => f.write_str("false"),
            Guard::And(cs) | Guard::Or(cs) => {
                let sep = if matches!(self, Guard::And(_)) { " ∧ " } else { " ∨ " };
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    if matches!(c, Guard::And(_) | Guard::Or(_)) {
                        write!(f, "({c})")?;
                    } else {
                        write!(f, "{c}")?;
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Eq(Term, Term),
    Neq(Term, Term),
}

impl Atom {
    pub fn into_guard(self) -> Guard {
        match self {
            Atom::Eq(a, b) => Guard::Eq(a, b),
            Atom::Neq(a, b) => Guard::Neq(a, b),
        }
    }

    pub fn terms(&self) -> [&Term; 2] {
        match self {
            Atom::Eq(a, b) | Atom::Neq(a, b) => [a, b],
        }
    }
}

/// Port data and memory contents a guard is evaluated against.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Valuation {
    pub port_data: BTreeMap<String, Literal>,
    pub mem_pre: BTreeMap<String, CellValue>,
    /// Cells missing here carry over their pre-value.
    pub mem_post: BTreeMap<String, CellValue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GuardError {
    #[error("port {0} has no datum in the valuation")]
    UnboundPort(String),
    #[error("memory cell {0} has no value in the valuation")]
    UnboundCell(String),
}

fn value_of(term: &Term, v: &Valuation) -> Result<CellValue, GuardError> {
    match term {
        Term::Lit(l) => Ok(Some(l.clone())),
        Term::Port(p) => v
            .port_data
            .get(p)
            .cloned()
            .map(Some)
            .ok_or_else(|| GuardError::UnboundPort(p.clone())),
        Term::MemPre(c) => v
            .mem_pre
            .get(c)
            .cloned()
            .ok_or_else(|| GuardError::UnboundCell(c.clone())),
        Term::MemPost(c) => match v.mem_post.get(c) {
            Some(x) => Ok(x.clone()),
            None => v
                .mem_pre
                .get(c)
                .cloned()
                .ok_or_else(|| GuardError::UnboundCell(c.clone())),
        },
    }
}

pub fn eval_guard(guard: &Guard, v: &Valuation) -> Result<bool, GuardError> {
    Ok(match guard {
        Guard::True => true,
        Guard::Eq(a, b) => value_of(a, v)? == value_of(b, v)?,
        Guard::Neq(a, b) => value_of(a, v)? != value_of(b, v)?,
        Guard::And(cs) => {
            for c in cs {
                if !eval_guard(c, v)? {
                    return Ok(false);
                }
            }
            true
        }
        Guard::Or(cs) => {
            for c in cs {
                if eval_guard(c, v)? {
                    return Ok(true);
                }
            }
            false
        }
    })
}

/// Union-find over the terms of one conjunction's equalities.
#[derive(Debug, Default)]
pub(crate) struct Classes {
    index: BTreeMap<Term, usize>,
    parent: Vec<usize>,
    terms: Vec<Term>,
}

impl Classes {
    pub(crate) fn from_atoms(atoms: &[Atom]) -> Self {
        let mut c = Classes::default();
        for atom in atoms {
            match atom {
                Atom::Eq(a, b) => {
                    let (x, y) = (c.add(a), c.add(b));
                    c.union(x, y);
                }
                Atom::Neq(a, b) => {
                    c.add(a);
                    c.add(b);
                }
            }
        }
        c
    }

    fn add(&mut self, t: &Term) -> usize {
        if let Some(&i) = self.index.get(t) {
            return i;
        }
        let i = self.terms.len();
        self.index.insert(t.clone(), i);
        self.parent.push(i);
        self.terms.push(t.clone());
        i
    }

    fn find(&self, mut i: usize) -> usize {
        while self.parent[i] != i {
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }

    pub(crate) fn root_of(&self, t: &Term) -> Option<usize> {
        self.index.get(t).map(|&i| self.find(i))
    }

    /// Classes as sorted term lists, keyed by root; deterministic order.
    pub(crate) fn groups(&self) -> BTreeMap<usize, Vec<Term>> {
        let mut out: BTreeMap<usize, Vec<Term>> = BTreeMap::new();
        for (i, t) in self.terms.iter().enumerate() {
            out.entry(self.find(i)).or_default().push(t.clone());
        }
        for v in out.values_mut() {
            v.sort();
        }
        out
    }
}

/// Values found for the unknown terms of a guard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub ports: BTreeMap<String, Literal>,
    pub mem_post: BTreeMap<String, CellValue>,
}

/// Solves one conjunction given known port data and pre-memory. Ports not in
/// `known_ports` and all post-memory terms are unknowns; each unknown must be
/// equated to a known value. Cells without a post term carry over.
pub fn solve_conjunction(
    atoms: &[Atom],
    known_ports: &BTreeMap<String, Literal>,
    mem_pre: &BTreeMap<String, CellValue>,
) -> Option<Solution> {
    let classes = Classes::from_atoms(atoms);
    let mut values: BTreeMap<usize, CellValue> = BTreeMap::new();
    for (root, terms) in classes.groups() {
        let mut known: Option<CellValue> = None;
        for t in &terms {
            let v = match t {
                Term::Lit(l) => Some(l.clone()),
                Term::Port(p) => match known_ports.get(p) {
                    Some(l) => Some(l.clone()),
                    None => continue,
                },
                Term::MemPre(c) => mem_pre.get(c)?.clone(),
                Term::MemPost(_) => continue,
            };
            match &known {
                None => known = Some(v),
                Some(k) if *k == v => {}
                Some(_) => return None,
            }
        }
        let value = match known {
            Some(v) => v,
            // a lone post-term constrained only by itself keeps its pre-value
            None => match terms.as_slice() {
                [Term::MemPost(c)] => mem_pre.get(c)?.clone(),
                _ => return None,
            },
        };
        values.insert(root, value);
    }

    let lookup = |t: &Term| -> Option<CellValue> {
        if let Some(root) = classes.root_of(t) {
            return values.get(&root).cloned();
        }
        match t {
            Term::Lit(l) => Some(Some(l.clone())),
            Term::Port(p) => known_ports.get(p).cloned().map(Some),
            Term::MemPre(c) | Term::MemPost(c) => mem_pre.get(c).cloned(),
        }
    };

    for atom in atoms {
        if let Atom::Neq(a, b) = atom {
            if lookup(a)? == lookup(b)? {
                return None;
            }
        }
    }

    let mut solution = Solution {
        ports: BTreeMap::new(),
        mem_post: BTreeMap::new(),
    };
    for t in classes.terms.iter() {
        match t {
            Term::Port(p) if !known_ports.contains_key(p) => {
                solution.ports.insert(p.clone(), lookup(t)??);
            }
            Term::MemPost(c) => {
                solution.mem_post.insert(c.clone(), lookup(t)?);
            }
            _ => {}
        }
    }
    Some(solution)
}

/// All solutions of a guard, one per satisfiable disjunct, deduplicated.
pub fn solve(
    dnf: &[Vec<Atom>],
    known_ports: &BTreeMap<String, Literal>,
    mem_pre: &BTreeMap<String, CellValue>,
) -> Vec<Solution> {
    let mut out: Vec<Solution> = Vec::new();
    for conj in dnf {
        if let Some(s) = solve_conjunction(conj, known_ports, mem_pre) {
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lit(s: &str) -> Literal {
        Literal::str(s)
    }

    #[test]
    fn filter_fill_guard() {
        let g = Guard::and([
            Guard::eq(Term::port("A"), Term::str("foo")),
            Guard::eq(Term::post("m"), Term::port("A")),
        ]);
        let mut v = Valuation::default();
        v.port_data.insert("A".into(), lit("foo"));
        v.mem_pre.insert("m".into(), None);
        v.mem_post.insert("m".into(), Some(lit("foo")));
        assert!(eval_guard(&g, &v).unwrap());
        v.mem_post.insert("m".into(), Some(lit("bar")));
        assert!(!eval_guard(&g, &v).unwrap());
    }

    #[test]
    fn true_and_negation() {
        let v = Valuation {
            port_data: [("A".to_string(), lit("foo"))].into(),
            ..Default::default()
        };
        assert!(eval_guard(&Guard::True, &v).unwrap());
        assert!(!eval_guard(&Guard::neq(Term::port("A"), Term::str("foo")), &v).unwrap());
    }

    #[test]
    fn unbound_port_is_error() {
        let g = Guard::eq(Term::port("Q"), Term::str("x"));
        assert_eq!(
            eval_guard(&g, &Valuation::default()),
            Err(GuardError::UnboundPort("Q".into()))
        );
    }

    #[test]
    fn post_defaults_to_pre() {
        let g = Guard::eq(Term::post("m"), Term::str("x"));
        let v = Valuation {
            mem_pre: [("m".to_string(), Some(lit("x")))].into(),
            ..Default::default()
        };
        assert!(eval_guard(&g, &v).unwrap());
    }

    #[test]
    fn normalize_orders_and_flattens() {
        let a = Guard::And(vec![
            Guard::eq(Term::post("m"), Term::port("A")),
            Guard::And(vec![Guard::eq(Term::port("A"), Term::str("foo")), Guard::True]),
        ]);
        let b = Guard::And(vec![
            Guard::eq(Term::str("foo"), Term::port("A")),
            Guard::eq(Term::port("A"), Term::post("m")),
        ]);
        assert_eq!(a.normalize(), b.normalize());
        assert_eq!(Guard::And(vec![]).normalize(), Guard::True);
    }

    #[test]
    fn display_uses_bracket_notation() {
        let g = Guard::and([
            Guard::eq(Term::port("A"), Term::str("foo")),
            Guard::eq(Term::post("m"), Term::port("A")),
        ]);
        assert_eq!(g.to_string(), "[A]=\"foo\" ∧ m'=[A]");
        assert_eq!(Guard::neq(Term::port("A"), Term::str("foo")).to_string(), "[A]≠\"foo\"");
    }

    #[test]
    fn solver_fills_outputs_and_memory() {
        let dnf = Guard::eq(Term::port("D"), Term::pre("m")).dnf();
        let mem = [("m".to_string(), Some(lit("x")))].into();
        let sols = solve(&dnf, &BTreeMap::new(), &mem);
        assert_eq!(sols.len(), 1);
        assert_eq!(sols[0].ports["D"], lit("x"));
        // empty cell cannot feed a port
        let empty = [("m".to_string(), None)].into();
        assert!(solve(&dnf, &BTreeMap::new(), &empty).is_empty());
    }

    #[test]
    fn solver_rejects_undetermined_output_and_conflicts() {
        let dnf = Guard::eq(Term::port("D"), Term::post("m")).dnf();
        let mem = [("m".to_string(), None)].into();
        assert!(solve(&dnf, &BTreeMap::new(), &mem).is_empty());
        let dnf = Guard::and([
            Guard::eq(Term::port("A"), Term::str("x")),
            Guard::eq(Term::port("A"), Term::str("y")),
        ])
        .dnf();
        let known = [("A".to_string(), lit("x"))].into();
        assert!(solve(&dnf, &known, &BTreeMap::new()).is_empty());
    }

    // Random small guards over ports A,B and cell m.
    fn arb_term() -> impl Strategy<Value = Term> {
        prop_oneof![
            Just(Term::port("A")),
            Just(Term::port("B")),
            Just(Term::pre("m")),
            Just(Term::post("m")),
            Just(Term::str("x")),
            Just(Term::str("y")),
        ]
    }

    fn arb_guard() -> impl Strategy<Value = Guard> {
        let leaf = prop_oneof![
            Just(Guard::True),
            (arb_term(), arb_term()).prop_map(|(a, b)| Guard::Eq(a, b)),
            (arb_term(), arb_term()).prop_map(|(a, b)| Guard::Neq(a, b)),
        ];
        leaf.prop_recursive(3, 16, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..3).prop_map(Guard::And),
                prop::collection::vec(inner, 0..3).prop_map(Guard::Or),
            ]
        })
    }

    fn arb_value() -> impl Strategy<Value = Literal> {
        prop_oneof![Just(lit("x")), Just(lit("y")), Just(lit("z"))]
    }

    fn arb_valuation() -> impl Strategy<Value = Valuation> {
        (
            arb_value(),
            arb_value(),
            prop::option::of(arb_value()),
            prop::option::of(arb_value()),
        )
            .prop_map(|(a, b, pre, post)| Valuation {
                port_data: [("A".to_string(), a), ("B".to_string(), b)].into(),
                mem_pre: [("m".to_string(), pre)].into(),
                mem_post: [("m".to_string(), post)].into(),
            })
    }

    fn negate(g: &Guard) -> Guard {
        match g {
            Guard::True => Guard::Or(vec![]),
            Guard::Eq(a, b) => Guard::Neq(a.clone(), b.clone()),
            Guard::Neq(a, b) => Guard::Eq(a.clone(), b.clone()),
            Guard::And(cs) => Guard::Or(cs.iter().map(negate).collect()),
            Guard::Or(cs) => {
                if cs.is_empty() {
                    Guard::True
                } else {
                    Guard::And(cs.iter().map(negate).collect())
                }
            }
        }
    }

    proptest! {
        #[test]
        fn boolean_algebra_laws(g in arb_guard(), h in arb_guard(), v in arb_valuation()) {
            prop_assert!(eval_guard(&Guard::And(vec![]), &v).unwrap());
            prop_assert!(!eval_guard(&Guard::Or(vec![]), &v).unwrap());
            let eg = eval_guard(&g, &v).unwrap();
            let eh = eval_guard(&h, &v).unwrap();
            // De Morgan
            let not_and = negate(&Guard::And(vec![g.clone(), h.clone()]));
            prop_assert_eq!(eval_guard(&not_and, &v).unwrap(), !(eg && eh));
            let not_or = negate(&Guard::Or(vec![g.clone(), h.clone()]));
            prop_assert_eq!(eval_guard(&not_or, &v).unwrap(), !(eg || eh));
            // normal form and DNF preserve meaning
            prop_assert_eq!(eval_guard(&g.normalize(), &v).unwrap(), eg);
            prop_assert_eq!(eval_guard(&Guard::from_dnf(g.dnf()), &v).unwrap(), eg);
        }

        #[test]
        fn solutions_satisfy_guard(g in arb_guard(), v in arb_valuation()) {
            // all ports known: every solution must make the guard true
            for s in solve(&g.dnf(), &v.port_data, &v.mem_pre) {
                let full = Valuation {
                    port_data: v.port_data.clone(),
                    mem_pre: v.mem_pre.clone(),
                    mem_post: s.mem_post.clone(),
                };
                prop_assert!(eval_guard(&g, &full).unwrap());
            }
        }
    }
}
