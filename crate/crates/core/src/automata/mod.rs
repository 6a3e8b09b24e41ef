//! Constraint automata: states, memory cells, and transitions labelled with a
//! synchronization set and a data constraint.
//!
//! A port automaton is the special case with no cells and `True` guards.

pub mod guard;
mod hide;
mod iso;
mod product;
mod traces;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

pub use guard::{eval_guard, Atom, CellValue, Guard, GuardError, Term, Valuation};
pub use hide::hide;
pub use iso::isomorphic;
pub use product::product;
pub use traces::{
    accepts_prefix, successors, trace_pool, traces, Configuration, Step, Trace, DEFAULT_TRACE_CAP,
    DEFAULT_TRACE_DEPTH, MAX_TRACE_DEPTH,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    /// Boundary source: user threads write here.
    Input,
    /// Boundary sink: user threads take here.
    Output,
    Internal,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Input => "input",
            Direction::Output => "output",
            Direction::Internal => "internal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transition {
    pub from: StateId,
    pub to: StateId,
    pub sync: BTreeSet<String>,
    pub guard: Guard,
}

impl Transition {
    pub fn is_silent(&self) -> bool {
        self.sync.is_empty()
    }

    /// `{A,C}`
    pub fn sync_label(&self) -> String {
        sync_label(&self.sync)
    }
}

pub fn sync_label(sync: &BTreeSet<String>) -> String {
    let names: Vec<&str> = sync.iter().map(String::as_str).collect();
    format!("{{{}}}", names.join(","))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AutomataError {
    #[error("memory cell {0} is declared by both operands of a product")]
    CellClash(String),
    #[error("port {0} is an input on one side and an output on the other")]
    DirectionClash(String),
    #[error("cannot hide {0}: not a port of the automaton")]
    UnknownPort(String),
    #[error("hidden port {port} is observed by a guard with no visible witness")]
    ResidualHidden { port: String },
    #[error("malformed automaton: {0}")]
    Malformed(String),
    #[error("trace depth {depth} exceeds the limit of {limit}")]
    DepthTooLarge { depth: usize, limit: usize },
    #[error("trace enumeration exceeded the cap of {cap} traces")]
    TraceLimit { cap: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintAutomaton {
    pub name: String,
    pub ports: BTreeMap<String, Direction>,
    /// Memory cells with their initial contents.
    pub cells: BTreeMap<String, CellValue>,
    /// State labels; a state's id is its index.
    pub states: Vec<String>,
    pub initial: StateId,
    pub transitions: Vec<Transition>,
}

impl ConstraintAutomaton {
    /// A single-state automaton without ports, cells, or transitions.
    pub fn new(name: impl Into<String>) -> Self {
        ConstraintAutomaton {
            name: name.into(),
            ports: BTreeMap::new(),
            cells: BTreeMap::new(),
            states: Vec::new(),
            initial: StateId(0),
            transitions: Vec::new(),
        }
    }

    pub fn with_port(mut self, name: &str, direction: Direction) -> Self {
        self.ports.insert(name.to_string(), direction);
        self
    }

    pub fn with_cell(mut self, name: &str, init: CellValue) -> Self {
        self.cells.insert(name.to_string(), init);
        self
    }

    pub fn add_state(&mut self, label: impl Into<String>) -> StateId {
        self.states.push(label.into());
        StateId(self.states.len() - 1)
    }

    pub fn add_transition(&mut self, from: StateId, to: StateId, sync: &[&str], guard: Guard) {
        self.transitions.push(Transition {
            from,
            to,
            sync: sync.iter().map(|s| s.to_string()).collect(),
            guard,
        });
    }

    pub fn state_label(&self, s: StateId) -> &str {
        &self.states[s.0]
    }

    pub fn outgoing(&self, s: StateId) -> impl Iterator<Item = (usize, &Transition)> {
        self.transitions
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.from == s)
    }

    pub fn ports_with(&self, dir: Direction) -> impl Iterator<Item = &str> {
        self.ports
            .iter()
            .filter(move |(_, d)| **d == dir)
            .map(|(p, _)| p.as_str())
    }

    /// Input and output ports, sorted.
    pub fn boundary_ports(&self) -> Vec<String> {
        self.ports
            .iter()
            .filter(|(_, d)| **d != Direction::Internal)
            .map(|(p, _)| p.clone())
            .collect()
    }

    /// Checks that every reference is closed: initial state and transition
    /// endpoints exist, sync sets name declared ports, and guards mention only
    /// ports of their own sync set and declared cells.
    pub fn check_well_formed(&self) -> Result<(), AutomataError> {
        let n = self.states.len();
        if self.initial.0 >= n {
            return Err(AutomataError::Malformed(format!(
                "initial state {} out of range",
                self.initial
            )));
        }
        for (i, t) in self.transitions.iter().enumerate() {
            if t.from.0 >= n || t.to.0 >= n {
                return Err(AutomataError::Malformed(format!(
                    "transition {i} references a missing state"
                )));
            }
            if let Some(p) = t.sync.iter().find(|p| !self.ports.contains_key(*p)) {
                return Err(AutomataError::Malformed(format!(
                    "transition {i} synchronizes undeclared port {p}"
                )));
            }
            for term in t.guard.terms() {
                match term {
                    Term::Port(p) if !t.sync.contains(p) => {
                        return Err(AutomataError::Malformed(format!(
                            "transition {i} guard observes port {p} outside its sync set"
                        )))
                    }
                    Term::MemPre(c) | Term::MemPost(c) if !self.cells.contains_key(c) => {
                        return Err(AutomataError::Malformed(format!(
                            "transition {i} guard mentions undeclared cell {c}"
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn reachable_set(&self) -> Vec<bool> {
        let mut seen = vec![false; self.states.len()];
        if self.states.is_empty() {
            return seen;
        }
        let mut queue = VecDeque::from([self.initial]);
        seen[self.initial.0] = true;
        while let Some(s) = queue.pop_front() {
            for (_, t) in self.outgoing(s) {
                if !seen[t.to.0] {
                    seen[t.to.0] = true;
                    queue.push_back(t.to);
                }
            }
        }
        seen
    }

    /// States in breadth-first order from the initial state, following
    /// transitions in list order.
    pub fn bfs_order(&self) -> Vec<StateId> {
        let mut order = Vec::new();
        let mut seen = vec![false; self.states.len()];
        if self.states.is_empty() {
            return order;
        }
        let mut queue = VecDeque::from([self.initial]);
        seen[self.initial.0] = true;
        while let Some(s) = queue.pop_front() {
            order.push(s);
            for (_, t) in self.outgoing(s) {
                if !seen[t.to.0] {
                    seen[t.to.0] = true;
                    queue.push_back(t.to);
                }
            }
        }
        order
    }

    /// Restriction to the states reachable from the initial state. State
    /// order is preserved; ids are renumbered densely.
    pub fn reachable(&self) -> ConstraintAutomaton {
        let seen = self.reachable_set();
        let mut remap = vec![None; self.states.len()];
        let mut states = Vec::new();
        for (i, label) in self.states.iter().enumerate() {
            if seen[i] {
                remap[i] = Some(StateId(states.len()));
                states.push(label.clone());
            }
        }
        let transitions = self
            .transitions
            .iter()
            .filter(|t| seen[t.from.0])
            .map(|t| Transition {
                from: remap[t.from.0].unwrap(),
                to: remap[t.to.0].unwrap(),
                sync: t.sync.clone(),
                guard: t.guard.clone(),
            })
            .collect();
        ConstraintAutomaton {
            name: self.name.clone(),
            ports: self.ports.clone(),
            cells: self.cells.clone(),
            states,
            initial: remap.get(self.initial.0).copied().flatten().unwrap_or(StateId(0)),
            transitions,
        }
    }

    /// Reachable states without outgoing transitions.
    pub fn deadlocks(&self) -> BTreeSet<StateId> {
        let seen = self.reachable_set();
        let mut has_out = vec![false; self.states.len()];
        for t in &self.transitions {
            has_out[t.from.0] = true;
        }
        (0..self.states.len())
            .filter(|&i| seen[i] && !has_out[i])
            .map(StateId)
            .collect()
    }

    /// Indices of transitions with an empty sync set.
    pub fn silent_transitions(&self) -> Vec<usize> {
        self.transitions
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_silent())
            .map(|(i, _)| i)
            .collect()
    }

    /// The underlying port automaton: guards become `True`, cells are dropped,
    /// and transitions that then coincide are merged.
    pub fn erase_data(&self) -> ConstraintAutomaton {
        let mut out = self.clone();
        out.cells.clear();
        for t in &mut out.transitions {
            t.guard = Guard::True;
        }
        out.dedup_transitions();
        out
    }

    /// Removes transitions equal up to guard normal form, keeping the first.
    pub fn dedup_transitions(&mut self) {
        let mut seen = BTreeSet::new();
        self.transitions.retain(|t| {
            seen.insert((t.from, t.to, t.sync.clone(), t.guard.normalize()))
        });
    }

    /// Replaces state labels with `{prefix}{i}` in breadth-first order and
    /// reorders states accordingly.
    pub fn relabel_bfs(&self, prefix: &str) -> ConstraintAutomaton {
        let order = self.reachable().bfs_order();
        let base = self.reachable();
        let mut remap = vec![StateId(0); base.states.len()];
        for (new, old) in order.iter().enumerate() {
            remap[old.0] = StateId(new);
        }
        let mut transitions: Vec<Transition> = base
            .transitions
            .iter()
            .map(|t| Transition {
                from: remap[t.from.0],
                to: remap[t.to.0],
                sync: t.sync.clone(),
                guard: t.guard.clone(),
            })
            .collect();
        transitions.sort_by_key(|t| (t.from, t.to));
        ConstraintAutomaton {
            name: base.name.clone(),
            ports: base.ports.clone(),
            cells: base.cells.clone(),
            states: (0..order.len()).map(|i| format!("{prefix}{i}")).collect(),
            initial: StateId(0),
            transitions,
        }
    }
}
