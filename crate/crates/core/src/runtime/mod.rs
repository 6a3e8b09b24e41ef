//! Executes a constraint automaton between user threads.
//!
//! Boundary ports queue writes and takes. A coordinator thread repeatedly
//! picks an outgoing transition of the current state and tries to fire it:
//! it locks the queues of every port in the sync set (in name order), looks
//! for pending operations whose data satisfy the guard, and completes them
//! all at once or none at all.

mod coordinator;
mod port;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::automata::{sync_label, AutomataError, Direction};
use crate::connector::Literal;

pub use coordinator::{open, Coordinator, Policy, StepOutcome};
pub use port::{Port, TakeTicket, WriteTicket};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PortError {
    #[error("port {port} is an {} port", direction.as_str())]
    WrongDirection { port: String, direction: Direction },
    #[error("connector has shut down")]
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("automaton has no input or output ports")]
    NoBoundaryPorts,
    #[error("no boundary port named {0}")]
    UnknownPort(String),
    #[error(transparent)]
    Automata(#[from] AutomataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AbortReason {
    NoPendingOps,
    GuardUnsatisfiable,
}

impl AbortReason {
    pub fn as_str(self) -> &'static str {
        match self {
            AbortReason::NoPendingOps => "no-pending-ops",
            AbortReason::GuardUnsatisfiable => "guard-unsatisfiable",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub fired: u64,
    pub aborts: u64,
    pub lock_order_violations: u64,
}

/// One line of the coordinator's event log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Fire {
        from: String,
        sync: BTreeSet<String>,
        data: BTreeMap<String, Literal>,
        to: String,
    },
    Abort(AbortReason),
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Fire { from, sync, data, to } => {
                let data: Vec<String> = data.iter().map(|(p, d)| format!("{p}={d}")).collect();
                write!(f, "FIRE {from} {} {{{}}} -> {to}", sync_label(sync), data.join(","))
            }
            Event::Abort(r) => write!(f, "ABORT {}", r.as_str()),
        }
    }
}

impl Event {
    /// Parses a line produced by `Display`.
    pub fn parse(line: &str) -> Option<Event> {
        if let Some(r) = line.strip_prefix("ABORT ") {
            return match r.trim_end() {
                "no-pending-ops" => Some(Event::Abort(AbortReason::NoPendingOps)),
                "guard-unsatisfiable" => Some(Event::Abort(AbortReason::GuardUnsatisfiable)),
                _ => None,
            };
        }
        let rest = line.strip_prefix("FIRE ")?;
        let (from, rest) = rest.split_once(' ')?;
        let rest = rest.strip_prefix('{')?;
        let (sync, rest) = rest.split_once('}')?;
        let sync: BTreeSet<String> = sync
            .split(',')
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        let rest = rest.strip_prefix(" {")?;
        let (data, rest) = parse_data(rest)?;
        let to = rest.strip_prefix(" -> ")?.trim_end();
        if to.is_empty() || to.contains(' ') {
            return None;
        }
        Some(Event::Fire {
            from: from.to_string(),
            sync,
            data,
            to: to.to_string(),
        })
    }
}

/// Parses `port=datum,...}` and returns the remainder after the brace.
fn parse_data(s: &str) -> Option<(BTreeMap<String, Literal>, &str)> {
    let mut data = BTreeMap::new();
    let mut rest = s;
    if let Some(r) = rest.strip_prefix('}') {
        return Some((data, r));
    }
    loop {
        let (port, r) = rest.split_once('=')?;
        let (lit, r) = if let Some(body) = r.strip_prefix('"') {
            let mut out = String::new();
            let mut chars = body.char_indices();
            let end = loop {
                let (i, c) = chars.next()?;
                match c {
                    '\\' => out.push(chars.next()?.1),
                    '"' => break i + 1,
                    c => out.push(c),
                }
            };
            (Literal::Str(out), &body[end..])
        } else {
            let end = r.find([',', '}'])?;
            (Literal::Int(r[..end].parse().ok()?), &r[end..])
        };
        data.insert(port.to_string(), lit);
        if let Some(r) = r.strip_prefix(',') {
            rest = r;
        } else {
            return Some((data, r.strip_prefix('}')?));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_lines_round_trip() {
        let e = Event::Fire {
            from: "q0".into(),
            sync: ["A".to_string()].into(),
            data: [
                ("A".to_string(), Literal::str("a,\"b}")),
                ("B".to_string(), Literal::Int(-3)),
            ]
            .into(),
            to: "q1".into(),
        };
        let line = e.to_string();
        assert_eq!(line, r#"FIRE q0 {A} {A="a,\"b}",B=-3} -> q1"#);
        assert_eq!(Event::parse(&line), Some(e));
        let a = Event::Abort(AbortReason::GuardUnsatisfiable);
        assert_eq!(a.to_string(), "ABORT guard-unsatisfiable");
        assert_eq!(Event::parse(&a.to_string()), Some(a));
        assert_eq!(Event::parse("FIRE q0 {} {} -> q0").unwrap().to_string(), "FIRE q0 {} {} -> q0");
        assert_eq!(Event::parse("FIRE q0 {A} {A=} -> q1"), None);
        assert_eq!(Event::parse("HELLO"), None);
    }
}
