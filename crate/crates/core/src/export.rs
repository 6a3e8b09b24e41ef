//! Canonical JSON interchange, Graphviz rendering, and a structural summary
//! of an automaton.
//!
//! JSON layout (keys are always emitted sorted):
//!
//! ```text
//! { "schemaVersion": 1, "name": "...",
//!   "ports": [{"name": "A", "direction": "input"}],
//!   "cells": [{"name": "m", "init": null}],
//!   "states": [0, 1], "initial": 0,
//!   "transitions": [{"from": 0, "to": 1, "sync": ["A"],
//!                    "guard": {"op": "eq", "args": [{"port": "A"}, {"post": "m"}]}}] }
//! ```
//!
//! States are numbered in breadth-first order from the initial state.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::automata::{ConstraintAutomaton, Direction, Guard, StateId, Term, Transition};
use crate::connector::Literal;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct FormatError {
    /// JSON path of the offending value, e.g. `$.transitions[2].guard`.
    pub path: String,
    pub message: String,
}

fn literal_json(l: &Literal) -> Value {
    match l {
        Literal::Str(s) => json!({ "str": s }),
        Literal::Int(i) => json!({ "int": i }),
    }
}

fn term_json(t: &Term) -> Value {
    match t {
        Term::Port(p) => json!({ "port": p }),
        Term::Lit(l) => json!({ "lit": literal_json(l) }),
        Term::MemPre(c) => json!({ "pre": c }),
        Term::MemPost(c) => json!({ "post": c }),
    }
}

fn guard_json(g: &Guard) -> Value {
    let (op, args): (&str, Vec<Value>) = match g {
        Guard::True => ("true", vec![]),
        Guard::Eq(a, b) => ("eq", vec![term_json(a), term_json(b)]),
        Guard::Neq(a, b) => ("neq", vec![term_json(a), term_json(b)]),
        Guard::And(cs) => ("and", cs.iter().map(guard_json).collect()),
        Guard::Or(cs) => ("or", cs.iter().map(guard_json).collect()),
    };
    json!({ "op": op, "args": args })
}

/// Canonical form: reachable states in BFS order, normalized guards,
/// transitions sorted.
fn canonical(a: &ConstraintAutomaton) -> ConstraintAutomaton {
    let mut c = a.relabel_bfs("q");
    for t in &mut c.transitions {
        t.guard = t.guard.normalize();
    }
    c.transitions.sort();
    c.transitions.dedup();
    c
}

pub fn export_value(a: &ConstraintAutomaton) -> Value {
    let c = canonical(a);
    json!({
        "schemaVersion": SCHEMA_VERSION,
        "name": c.name,
        "ports": c.ports.iter()
            .map(|(p, d)| json!({ "name": p, "direction": d.as_str() }))
            .collect::<Vec<_>>(),
        "cells": c.cells.iter()
            .map(|(n, v)| json!({ "name": n, "init": v.as_ref().map(literal_json) }))
            .collect::<Vec<_>>(),
        "states": (0..c.states.len()).collect::<Vec<_>>(),
        "initial": 0,
        "transitions": c.transitions.iter()
            .map(|t| json!({
                "from": t.from.0,
                "to": t.to.0,
                "sync": t.sync.iter().collect::<Vec<_>>(),
                "guard": guard_json(&t.guard),
            }))
            .collect::<Vec<_>>(),
    })
}

pub fn export_json(a: &ConstraintAutomaton) -> String {
    let mut s = serde_json::to_string_pretty(&export_value(a)).expect("json values serialize");
    s.push('\n');
    s
}

fn err(path: &str, message: impl Into<String>) -> FormatError {
    FormatError {
        path: path.to_string(),
        message: message.into(),
    }
}

fn field<'a>(obj: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value, FormatError> {
    obj.get(key).ok_or_else(|| err(path, format!("missing {key}")))
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, FormatError> {
    v.as_object().ok_or_else(|| err(path, "expected an object"))
}

fn array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>, FormatError> {
    v.as_array().ok_or_else(|| err(path, "expected an array"))
}

fn string<'a>(v: &'a Value, path: &str) -> Result<&'a str, FormatError> {
    v.as_str().ok_or_else(|| err(path, "expected a string"))
}

fn index(v: &Value, path: &str) -> Result<u64, FormatError> {
    v.as_u64().ok_or_else(|| err(path, "expected a non-negative integer"))
}

fn parse_literal(v: &Value, path: &str) -> Result<Literal, FormatError> {
    let o = object(v, path)?;
    match (o.get("str"), o.get("int"), o.len()) {
        (Some(s), None, 1) => Ok(Literal::Str(string(s, &format!("{path}.str"))?.to_string())),
        (None, Some(i), 1) => i
            .as_i64()
            .map(Literal::Int)
            .ok_or_else(|| err(&format!("{path}.int"), "expected a 64-bit integer")),
        _ => Err(err(path, "expected {\"str\": ...} or {\"int\": ...}")),
    }
}

fn parse_term(v: &Value, path: &str) -> Result<Term, FormatError> {
    let o = object(v, path)?;
    let Some((k, inner)) = o.iter().next().filter(|_| o.len() == 1) else {
        return Err(err(path, "expected a single-key term object"));
    };
    let p = format!("{path}.{k}");
    Ok(match k.as_str() {
        "port" => Term::Port(string(inner, &p)?.to_string()),
        "pre" => Term::MemPre(string(inner, &p)?.to_string()),
        "post" => Term::MemPost(string(inner, &p)?.to_string()),
        "lit" => Term::Lit(parse_literal(inner, &p)?),
        other => return Err(err(path, format!("unknown term kind {other}"))),
    })
}

fn parse_guard(v: &Value, path: &str) -> Result<Guard, FormatError> {
    let o = object(v, path)?;
    let op = string(field(o, path, "op")?, &format!("{path}.op"))?;
    let args = array(field(o, path, "args")?, &format!("{path}.args"))?;
    let arg = |i: usize| format!("{path}.args[{i}]");
    match op {
        "true" if args.is_empty() => Ok(Guard::True),
        "eq" | "neq" if args.len() == 2 => {
            let a = parse_term(&args[0], &arg(0))?;
            let b = parse_term(&args[1], &arg(1))?;
            Ok(if op == "eq" { Guard::Eq(a, b) } else { Guard::Neq(a, b) })
        }
        "and" | "or" => {
            let cs = args
                .iter()
                .enumerate()
                .map(|(i, g)| parse_guard(g, &arg(i)))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(if op == "and" { Guard::And(cs) } else { Guard::Or(cs) })
        }
        "true" | "eq" | "neq" => Err(err(&format!("{path}.args"), format!("wrong number of arguments for {op}"))),
        other => Err(err(path, format!("unknown guard operator {other}"))),
    }
}

fn parse_direction(v: &Value, path: &str) -> Result<Direction, FormatError> {
    match string(v, path)? {
        "input" => Ok(Direction::Input),
        "output" => Ok(Direction::Output),
        "internal" => Ok(Direction::Internal),
        other => Err(err(path, format!("unknown direction {other}"))),
    }
}

pub fn import_json(text: &str) -> Result<ConstraintAutomaton, FormatError> {
    let v: Value = serde_json::from_str(text).map_err(|e| err("$", format!("invalid JSON: {e}")))?;
    import_value(&v)
}

pub fn import_value(v: &Value) -> Result<ConstraintAutomaton, FormatError> {
    let root = object(v, "$")?;
    let initial = index(field(root, "$", "initial")?, "$.initial")?;
    let version = index(field(root, "$", "schemaVersion")?, "$.schemaVersion")?;
    if version != SCHEMA_VERSION {
        return Err(err("$.schemaVersion", format!("unsupported schema version {version}")));
    }
    let name = string(field(root, "$", "name")?, "$.name")?;
    let mut a = ConstraintAutomaton::new(name);

    for (i, p) in array(field(root, "$", "ports")?, "$.ports")?.iter().enumerate() {
        let path = format!("$.ports[{i}]");
        let o = object(p, &path)?;
        let n = string(field(o, &path, "name")?, &format!("{path}.name"))?;
        let d = parse_direction(field(o, &path, "direction")?, &format!("{path}.direction"))?;
        if a.ports.insert(n.to_string(), d).is_some() {
            return Err(err(&path, format!("duplicate port {n}")));
        }
    }
    for (i, c) in array(field(root, "$", "cells")?, "$.cells")?.iter().enumerate() {
        let path = format!("$.cells[{i}]");
        let o = object(c, &path)?;
        let n = string(field(o, &path, "name")?, &format!("{path}.name"))?;
        let init = match field(o, &path, "init")? {
            Value::Null => None,
            l => Some(parse_literal(l, &format!("{path}.init"))?),
        };
        if a.cells.insert(n.to_string(), init).is_some() {
            return Err(err(&path, format!("duplicate cell {n}")));
        }
    }

    let mut ids: BTreeMap<u64, StateId> = BTreeMap::new();
    for (i, s) in array(field(root, "$", "states")?, "$.states")?.iter().enumerate() {
        let path = format!("$.states[{i}]");
        let n = index(s, &path)?;
        if ids.contains_key(&n) {
            return Err(err(&path, format!("duplicate state {n}")));
        }
        ids.insert(n, a.add_state(format!("q{n}")));
    }
    a.initial = *ids
        .get(&initial)
        .ok_or_else(|| err("$.initial", format!("unknown state {initial}")))?;

    for (i, t) in array(field(root, "$", "transitions")?, "$.transitions")?.iter().enumerate() {
        let path = format!("$.transitions[{i}]");
        let o = object(t, &path)?;
        let state = |key: &str| -> Result<StateId, FormatError> {
            let p = format!("{path}.{key}");
            let n = index(field(o, &path, key)?, &p)?;
            ids.get(&n).copied().ok_or_else(|| err(&p, format!("unknown state {n}")))
        };
        let (from, to) = (state("from")?, state("to")?);
        let mut sync = std::collections::BTreeSet::new();
        for (j, p) in array(field(o, &path, "sync")?, &format!("{path}.sync"))?.iter().enumerate() {
            let pp = format!("{path}.sync[{j}]");
            let name = string(p, &pp)?;
            if !a.ports.contains_key(name) {
                return Err(err(&pp, format!("undeclared port {name}")));
            }
            sync.insert(name.to_string());
        }
        let guard = parse_guard(field(o, &path, "guard")?, &format!("{path}.guard"))?;
        a.transitions.push(Transition { from, to, sync, guard });
    }
    a.check_well_formed().map_err(|e| err("$", e.to_string()))?;
    Ok(a)
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: one circle per state, an arrow from a point into the
/// initial state, edges labelled `{A,C} | guard` (guard omitted when true).
pub fn export_dot(a: &ConstraintAutomaton) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", dot_escape(&a.name));
    out.push_str("  rankdir=LR;\n  __start [shape=point];\n");
    for s in &a.states {
        let _ = writeln!(out, "  \"{}\" [shape=circle];", dot_escape(s));
    }
    if !a.states.is_empty() {
        let _ = writeln!(out, "  __start -> \"{}\";", dot_escape(a.state_label(a.initial)));
    }
    for t in &a.transitions {
        let guard = t.guard.normalize();
        let label = if guard.is_true() {
            t.sync_label()
        } else {
            format!("{} | {}", t.sync_label(), guard)
        };
        let _ = writeln!(
            out,
            "  \"{}\" -> \"{}\" [label=\"{}\"];",
            dot_escape(a.state_label(t.from)),
            dot_escape(a.state_label(t.to)),
            dot_escape(&label)
        );
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisReport {
    pub state_count: usize,
    pub transition_count: usize,
    pub reachable_count: usize,
    /// Labels of reachable states without outgoing transitions.
    pub deadlock_states: Vec<String>,
    pub boundary_ports: Vec<(String, Direction)>,
    pub silent_count: usize,
}

pub fn analyze(a: &ConstraintAutomaton) -> AnalysisReport {
    AnalysisReport {
        state_count: a.states.len(),
        transition_count: a.transitions.len(),
        reachable_count: a.bfs_order().len(),
        deadlock_states: a
            .deadlocks()
            .into_iter()
            .map(|s| a.state_label(s).to_string())
            .collect(),
        boundary_ports: a
            .ports
            .iter()
            .filter(|(_, d)| **d != Direction::Internal)
            .map(|(p, d)| (p.clone(), *d))
            .collect(),
        silent_count: a.silent_transitions().len(),
    }
}

impl fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "states: {}", self.state_count)?;
        writeln!(f, "transitions: {}", self.transition_count)?;
        writeln!(f, "reachable: {}", self.reachable_count)?;
        writeln!(f, "deadlocks: {}", self.deadlock_states.len())?;
        if !self.deadlock_states.is_empty() {
            writeln!(f, "deadlock states: {}", self.deadlock_states.join(", "))?;
        }
        let ports: Vec<String> = self
            .boundary_ports
            .iter()
            .map(|(p, d)| format!("{p} ({})", d.as_str()))
            .collect();
        writeln!(f, "boundary ports: {}", ports.join(", "))?;
        writeln!(f, "silent transitions: {}", self.silent_count)
    }
}
