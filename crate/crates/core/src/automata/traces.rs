use std::collections::{BTreeMap, BTreeSet};

use super::guard::{solve_conjunction, Classes};
use super::{AutomataError, CellValue, ConstraintAutomaton, StateId, Term};
use crate::connector::Literal;

pub const MAX_TRACE_DEPTH: usize = 16;
pub const DEFAULT_TRACE_DEPTH: usize = 8;
pub const DEFAULT_TRACE_CAP: usize = 200_000;

/// One observable step: the ports that fired together and their data.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Step {
    pub sync: BTreeSet<String>,
    pub data: BTreeMap<String, Literal>,
}

impl Step {
    pub fn new(data: &[(&str, Literal)]) -> Step {
        Step {
            sync: data.iter().map(|(p, _)| p.to_string()).collect(),
            data: data.iter().map(|(p, l)| (p.to_string(), l.clone())).collect(),
        }
    }
}

pub type Trace = Vec<Step>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    pub state: StateId,
    pub memory: BTreeMap<String, CellValue>,
}

impl Configuration {
    pub fn initial(a: &ConstraintAutomaton) -> Configuration {
        Configuration {
            state: a.initial,
            memory: a.cells.clone(),
        }
    }
}

/// All steps enabled in `config`. Port data not fixed by the guard ranges
/// over `pool`.
pub fn successors(
    a: &ConstraintAutomaton,
    config: &Configuration,
    pool: &BTreeSet<Literal>,
) -> Vec<(Step, Configuration)> {
    let mut out = BTreeSet::new();
    for (_, t) in a.outgoing(config.state) {
        for conj in t.guard.dnf() {
            // ports whose value is not forced by a literal or a pre-value:
            // one representative per class, plus ports the guard ignores
            let classes = Classes::from_atoms(&conj);
            let groups = classes.groups();
            let mut free: Vec<&String> = Vec::new();
            for terms in groups.values() {
                let forced = terms
                    .iter()
                    .any(|x| matches!(x, Term::Lit(_) | Term::MemPre(_)));
                if forced {
                    continue;
                }
                if let Some(Term::Port(p)) = terms.iter().find(|x| matches!(x, Term::Port(_))) {
                    if t.sync.contains(p) {
                        free.push(p);
                    }
                }
            }
            for p in &t.sync {
                if classes.root_of(&Term::Port(p.clone())).is_none() {
                    free.push(p);
                }
            }

            let mut choice = vec![0usize; free.len()];
            let values: Vec<&Literal> = pool.iter().collect();
            if !free.is_empty() && values.is_empty() {
                continue;
            }
            loop {
                let known: BTreeMap<String, Literal> = free
                    .iter()
                    .zip(&choice)
                    .map(|(p, &i)| ((*p).clone(), values[i].clone()))
                    .collect();
                if let Some(sol) = solve_conjunction(&conj, &known, &config.memory) {
                    let mut data = known.clone();
                    data.extend(sol.ports.into_iter().filter(|(p, _)| t.sync.contains(p)));
                    if data.len() == t.sync.len() {
                        let mut memory = config.memory.clone();
                        memory.extend(sol.mem_post);
                        out.insert((
                            Step {
                                sync: t.sync.clone(),
                                data,
                            },
                            Configuration { state: t.to, memory },
                        ));
                    }
                }
                // odometer over the free ports
                let mut k = 0;
                while k < choice.len() {
                    choice[k] += 1;
                    if choice[k] < values.len() {
                        break;
                    }
                    choice[k] = 0;
                    k += 1;
                }
                if k == choice.len() {
                    break;
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Data pool for enumeration: the caller's values, every guard literal, and
/// the initial cell contents.
pub fn trace_pool(a: &ConstraintAutomaton, extra: &[Literal]) -> BTreeSet<Literal> {
    let mut pool: BTreeSet<Literal> = extra.iter().cloned().collect();
    for t in &a.transitions {
        pool.extend(t.guard.literals());
    }
    pool.extend(a.cells.values().flatten().cloned());
    pool
}

/// Maximal traces up to `depth`: sequences of exactly `depth` steps, or
/// shorter ones that end in a configuration with no enabled step.
pub fn traces(
    a: &ConstraintAutomaton,
    depth: usize,
    pool: &[Literal],
    cap: usize,
) -> Result<BTreeSet<Trace>, AutomataError> {
    if depth > MAX_TRACE_DEPTH {
        return Err(AutomataError::DepthTooLarge {
            depth,
            limit: MAX_TRACE_DEPTH,
        });
    }
    let mut out = BTreeSet::new();
    if a.states.is_empty() {
        return Ok(out);
    }
    let pool = trace_pool(a, pool);
    let mut memo: BTreeMap<Configuration, Vec<(Step, Configuration)>> = BTreeMap::new();
    let mut prefix = Vec::new();
    walk(a, &pool, Configuration::initial(a), depth, cap, &mut memo, &mut prefix, &mut out)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn walk(
    a: &ConstraintAutomaton,
    pool: &BTreeSet<Literal>,
    config: Configuration,
    remaining: usize,
    cap: usize,
    memo: &mut BTreeMap<Configuration, Vec<(Step, Configuration)>>,
    prefix: &mut Trace,
    out: &mut BTreeSet<Trace>,
) -> Result<(), AutomataError> {
    let next = if remaining == 0 {
        Vec::new()
    } else {
        memo.entry(config.clone())
            .or_insert_with(|| successors(a, &config, pool))
            .clone()
    };
    if next.is_empty() {
        out.insert(prefix.clone());
        if out.len() > cap {
            return Err(AutomataError::TraceLimit { cap });
        }
        return Ok(());
    }
    for (step, c) in next {
        prefix.push(step);
        walk(a, pool, c, remaining - 1, cap, memo, prefix, out)?;
        prefix.pop();
    }
    Ok(())
}

/// Moves on transitions touching none of `observable`, filling their ports
/// from the guard alone.
fn silent_closure(
    a: &ConstraintAutomaton,
    observable: &BTreeSet<String>,
    configs: BTreeSet<Configuration>,
) -> BTreeSet<Configuration> {
    let mut seen = configs.clone();
    let mut frontier: Vec<Configuration> = configs.into_iter().collect();
    while let Some(c) = frontier.pop() {
        for next in fire(a, &c, observable, &BTreeSet::new(), &BTreeMap::new()) {
            if seen.insert(next.clone()) {
                frontier.push(next);
            }
        }
    }
    seen
}

/// Configurations reached from `c` by a transition whose observable part is
/// exactly `sync`, with observable data `data`.
fn fire(
    a: &ConstraintAutomaton,
    c: &Configuration,
    observable: &BTreeSet<String>,
    sync: &BTreeSet<String>,
    data: &BTreeMap<String, Literal>,
) -> Vec<Configuration> {
    let mut out = Vec::new();
    for (_, t) in a.outgoing(c.state) {
        let seen: BTreeSet<String> = t.sync.intersection(observable).cloned().collect();
        if &seen != sync {
            continue;
        }
        for conj in t.guard.dnf() {
            let Some(sol) = solve_conjunction(&conj, data, &c.memory) else {
                continue;
            };
            // every port of the transition needs a datum
            let determined = t
                .sync
                .iter()
                .all(|p| data.contains_key(p) || sol.ports.contains_key(p));
            if !determined {
                continue;
            }
            let mut memory = c.memory.clone();
            memory.extend(sol.mem_post);
            out.push(Configuration { state: t.to, memory });
        }
    }
    out
}

/// Whether `seq` is a prefix of some run of `a` as seen through
/// `observable`: transitions touching no observable port are taken
/// silently, and data on unobserved ports is inferred from the guards.
pub fn accepts_prefix(a: &ConstraintAutomaton, observable: &BTreeSet<String>, seq: &[Step]) -> bool {
    if a.states.is_empty() {
        return false;
    }
    let mut configs = silent_closure(a, observable, BTreeSet::from([Configuration::initial(a)]));
    for step in seq {
        if !step.sync.is_subset(observable) || step.data.keys().any(|p| !step.sync.contains(p)) {
            return false;
        }
        let mut next = BTreeSet::new();
        for c in &configs {
            next.extend(fire(a, c, observable, &step.sync, &step.data));
        }
        if next.is_empty() {
            return false;
        }
        configs = silent_closure(a, observable, next);
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::{isomorphic, product, Direction, Guard};
    use crate::fixtures;
    use proptest::prelude::*;

    fn s(v: &str) -> Literal {
        Literal::str(v)
    }

    #[test]
    fn merger_traces_with_one_value() {
        let a = fixtures::merger_automaton();
        let t = traces(&a, 2, &[s("x")], DEFAULT_TRACE_CAP).unwrap();
        let x = s("x");
        let expected: BTreeSet<Trace> = [
            vec![
                Step::new(&[("A", x.clone()), ("C", x.clone())]),
                Step::new(&[("D", x.clone())]),
            ],
            vec![
                Step::new(&[("B", x.clone()), ("C", x.clone())]),
                Step::new(&[("D", x.clone())]),
            ],
        ]
        .into();
        assert_eq!(t, expected);
    }

    #[test]
    fn sequencer_filter_and_buffer() {
        let a = fixtures::sequencer_automaton();
        let t = traces(&a, 2, &[s("bar")], DEFAULT_TRACE_CAP).unwrap();
        let foo_then_out = vec![
            Step::new(&[("A", s("foo"))]),
            Step::new(&[("D", s("foo"))]),
        ];
        assert!(t.contains(&foo_then_out));
        let bar_then_b = vec![
            Step::new(&[("A", s("bar"))]),
            Step::new(&[("B", s("bar"))]),
        ];
        assert!(t.contains(&bar_then_b));
        // after A="foo" only D may fire, carrying "foo"
        for tr in &t {
            if tr[0] == Step::new(&[("A", s("foo"))]) {
                assert_eq!(tr[1], Step::new(&[("D", s("foo"))]));
            }
        }
        // pool: {"bar","foo"}; Q offers A=foo, A=bar; T offers B=bar, B=foo
        assert_eq!(t.len(), 1 + 2);
    }

    #[test]
    fn depth_limit_and_cap() {
        let a = fixtures::merger_automaton();
        assert_eq!(
            traces(&a, MAX_TRACE_DEPTH + 1, &[], DEFAULT_TRACE_CAP),
            Err(AutomataError::DepthTooLarge {
                depth: MAX_TRACE_DEPTH + 1,
                limit: MAX_TRACE_DEPTH
            })
        );
        let pool: Vec<Literal> = (0..4).map(Literal::Int).collect();
        assert_eq!(
            traces(&a, 4, &pool, 10),
            Err(AutomataError::TraceLimit { cap: 10 })
        );
    }

    #[test]
    fn deadlock_ends_trace_early() {
        let mut a = ConstraintAutomaton::new("once").with_port("A", Direction::Input);
        let q = a.add_state("q");
        let r = a.add_state("r");
        a.add_transition(q, r, &["A"], Guard::True);
        let t = traces(&a, 3, &[s("x")], DEFAULT_TRACE_CAP).unwrap();
        assert_eq!(t, BTreeSet::from([vec![Step::new(&[("A", s("x"))])]]));
    }

    #[test]
    fn prefix_acceptance_agrees_with_enumeration() {
        let a = fixtures::sequencer_automaton();
        let obs: BTreeSet<String> = a.ports.keys().cloned().collect();
        for depth in 0..=6 {
            for tr in traces(&a, depth, &[s("bar")], DEFAULT_TRACE_CAP).unwrap() {
                assert!(accepts_prefix(&a, &obs, &tr));
            }
        }
        assert!(!accepts_prefix(&a, &obs, &[Step::new(&[("D", s("foo"))])]));
        assert!(!accepts_prefix(
            &a,
            &obs,
            &[Step::new(&[("A", s("foo"))]), Step::new(&[("D", s("bar"))])]
        ));
    }

    #[test]
    fn prefix_acceptance_through_hidden_ports() {
        // sync A->C, fifo C->D with C unobserved
        let mut p = ConstraintAutomaton::new("p")
            .with_port("A", Direction::Input)
            .with_port("C", Direction::Internal)
            .with_port("D", Direction::Output)
            .with_cell("m", None);
        let e = p.add_state("e");
        let f = p.add_state("f");
        p.add_transition(
            e,
            f,
            &["A", "C"],
            Guard::and([
                Guard::eq(Term::port("C"), Term::port("A")),
                Guard::eq(Term::post("m"), Term::port("C")),
            ]),
        );
        p.add_transition(f, e, &["D"], Guard::eq(Term::port("D"), Term::pre("m")));
        let obs: BTreeSet<String> = ["A".to_string(), "D".to_string()].into();
        let ok = [Step::new(&[("A", s("v"))]), Step::new(&[("D", s("v"))])];
        assert!(accepts_prefix(&p, &obs, &ok));
        let bad = [Step::new(&[("A", s("v"))]), Step::new(&[("D", s("w"))])];
        assert!(!accepts_prefix(&p, &obs, &bad));
    }

    // Random port automata with port-port equalities and a literal test.
    const PORTS: [&str; 4] = ["A", "B", "C", "D"];

    fn arb_automaton(name: &'static str) -> impl Strategy<Value = ConstraintAutomaton> {
        (
            prop::sample::subsequence(PORTS.to_vec(), 1..=3),
            1usize..=3,
        )
            .prop_flat_map(move |(ports, n)| {
                let ports2 = ports.clone();
                let trans = prop::collection::vec(
                    (
                        0..n,
                        0..n,
                        prop::sample::subsequence(ports.clone(), 1..=ports.len()),
                        0u8..3,
                    ),
                    0..5,
                );
                (Just(ports2), Just(n), trans)
            })
            .prop_map(move |(ports, n, trans)| {
                let mut a = ConstraintAutomaton::new(name);
                for p in &ports {
                    a = a.with_port(p, Direction::Internal);
                }
                for i in 0..n {
                    a.add_state(format!("{name}{i}"));
                }
                for (from, to, sync, g) in trans {
                    let guard = match (g, sync.as_slice()) {
                        (1, [x, y, ..]) => Guard::eq(Term::port(x), Term::port(y)),
                        (2, [x, ..]) => Guard::neq(Term::port(x), Term::str("x")),
                        _ => Guard::True,
                    };
                    a.add_transition(StateId(from), StateId(to), &sync, guard);
                }
                a
            })
    }

    // Oracle: simulate both operands side by side and combine steps with the
    // product rule on data-carrying steps.
    fn joint_traces(
        a: &ConstraintAutomaton,
        b: &ConstraintAutomaton,
        depth: usize,
        pool: &BTreeSet<Literal>,
    ) -> BTreeSet<Trace> {
        #[allow(clippy::too_many_arguments)]
        fn go(
            a: &ConstraintAutomaton,
            b: &ConstraintAutomaton,
            ca: Configuration,
            cb: Configuration,
            left: usize,
            pool: &BTreeSet<Literal>,
            prefix: &mut Trace,
            out: &mut BTreeSet<Trace>,
        ) {
            let mut next = BTreeSet::new();
            if left > 0 {
                let sa = successors(a, &ca, pool);
                let sb = successors(b, &cb, pool);
                for (st, c) in &sa {
                    if st.sync.iter().all(|p| !b.ports.contains_key(p)) {
                        next.insert((st.clone(), c.clone(), cb.clone()));
                    }
                    for (su, d) in &sb {
                        let sh_a: BTreeSet<_> = st.sync.iter().filter(|p| b.ports.contains_key(*p)).collect();
                        let sh_b: BTreeSet<_> = su.sync.iter().filter(|p| a.ports.contains_key(*p)).collect();
                        if sh_a != sh_b || sh_a.iter().any(|p| st.data[*p] != su.data[*p]) {
                            continue;
                        }
                        let mut step = st.clone();
                        step.sync.extend(su.sync.iter().cloned());
                        step.data.extend(su.data.clone());
                        next.insert((step, c.clone(), d.clone()));
                    }
                }
                for (su, d) in &sb {
                    if su.sync.iter().all(|p| !a.ports.contains_key(p)) {
                        next.insert((su.clone(), ca.clone(), d.clone()));
                    }
                }
            }
            if next.is_empty() {
                out.insert(prefix.clone());
                return;
            }
            for (step, c, d) in next {
                prefix.push(step);
                go(a, b, c, d, left - 1, pool, prefix, out);
                prefix.pop();
            }
        }
        let mut out = BTreeSet::new();
        go(
            a,
            b,
            Configuration::initial(a),
            Configuration::initial(b),
            depth,
            pool,
            &mut Vec::new(),
            &mut out,
        );
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn product_commutes(a in arb_automaton("a"), b in arb_automaton("b")) {
            let ab = product(&a, &b).unwrap();
            let ba = product(&b, &a).unwrap();
            prop_assert!(isomorphic(&ab, &ba).is_some());
        }

        #[test]
        fn product_associates(
            a in arb_automaton("a"),
            b in arb_automaton("b"),
            c in arb_automaton("c"),
        ) {
            let left = product(&product(&a, &b).unwrap(), &c).unwrap();
            let right = product(&a, &product(&b, &c).unwrap()).unwrap();
            prop_assert!(isomorphic(&left, &right).is_some());
        }

        #[test]
        fn product_traces_match_joint_simulation(
            a in arb_automaton("a"),
            b in arb_automaton("b"),
            depth in 0usize..=3,
        ) {
            let p = product(&a, &b).unwrap();
            let extra = [s("x"), s("y")];
            let pool = trace_pool(&p, &extra);
            let got = traces(&p, depth, &extra, DEFAULT_TRACE_CAP).unwrap();
            prop_assert_eq!(got, joint_traces(&a, &b, depth, &pool));
        }
    }
}
