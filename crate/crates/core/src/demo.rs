//! Producer/consumer harness around a running connector.
//!
//! Producer `k` writes `items` data to input port `k mod n` (inputs sorted by
//! name), tagged `P<k>-<i>`. One consumer takes from the output ports until
//! every item that can pass has been delivered.

use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::connector::{Connector, Literal};
use crate::automata::{ConstraintAutomaton, Direction};
use crate::derivation::{derive, DerivationError, HideMode};
use crate::dsl::parse;
use crate::fixtures;
use crate::runtime::{open, Coordinator, Event, Policy, Port, RuntimeError, Stats, TakeTicket, WriteTicket};

pub const BUILTIN_DEMOS: [&str; 3] = ["merger", "alternator", "sequencer"];

/// Builtin demo connectors, parsed from the shipped fixture files.
pub fn builtin(name: &str) -> Option<Connector> {
    let text = match name {
        "merger" => fixtures::MERGER_REO,
        "alternator" => fixtures::ALTERNATOR_REO,
        "sequencer" => fixtures::SEQUENCER_REO,
        _ => return None,
    };
    Some(parse(text).expect("shipped fixtures parse"))
}

#[derive(Debug, Clone)]
pub struct DemoConfig {
    pub producers: usize,
    pub items: usize,
    pub seed: u64,
    pub policy: Policy,
    pub timeout: Duration,
    /// Producers on this port alternate `"foo"` and `"bar"` instead of
    /// tagged items; only the `"foo"` items count as deliverable.
    pub foo_bar_port: Option<String>,
    /// Copy every event to stderr as it happens.
    pub log_events: bool,
    /// Drive the coordinator from one thread, one pending write per
    /// producer, so the whole run is a function of the seed.
    pub serial: bool,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            producers: 2,
            items: 10,
            seed: 0,
            policy: Policy::Random,
            timeout: Duration::from_secs(30),
            foo_bar_port: None,
            log_events: false,
            serial: false,
        }
    }
}

impl DemoConfig {
    /// Settings matching a builtin demo.
    pub fn for_builtin(name: &str) -> DemoConfig {
        DemoConfig {
            foo_bar_port: (name == "sequencer").then(|| "A".to_string()),
            ..DemoConfig::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Derivation(#[from] DerivationError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("connector {0} needs at least one input and one output port to run")]
    NotRunnable(String),
}

#[derive(Debug, Clone)]
pub struct DemoReport {
    /// Items that should reach the consumer, in no particular order.
    pub expected: Vec<Literal>,
    /// Items the consumer received, in arrival order.
    pub delivered: Vec<Literal>,
    pub stats: Stats,
    /// Firing events in log order.
    pub fires: Vec<Event>,
    pub timed_out: bool,
}

impl DemoReport {
    /// Every expected item arrived exactly once and nothing else arrived.
    pub fn is_exact(&self) -> bool {
        let mut a = self.expected.clone();
        let mut b = self.delivered.clone();
        a.sort();
        b.sort();
        a == b
    }
}

fn payload(cfg: &DemoConfig, port: &str, k: usize, i: usize) -> Literal {
    if cfg.foo_bar_port.as_deref() == Some(port) {
        Literal::str(if i.is_multiple_of(2) { "foo" } else { "bar" })
    } else {
        Literal::str(format!("P{k}-{i}"))
    }
}

/// Takes from every sink until `count` items arrived or the connector
/// shuts down.
fn consume(sinks: Vec<Port>, count: usize, out: mpsc::Sender<Literal>) {
    if let [only] = sinks.as_slice() {
        for _ in 0..count {
            match only.take() {
                Ok(d) => {
                    if out.send(d).is_err() {
                        return;
                    }
                }
                Err(_) => return,
            }
        }
        return;
    }
    let mut tickets: Vec<Option<TakeTicket>> = sinks.iter().map(|_| None).collect();
    let mut got = 0;
    while got < count {
        let mut progressed = false;
        for (p, slot) in sinks.iter().zip(tickets.iter_mut()) {
            if slot.is_none() {
                match p.submit_take() {
                    Ok(t) => *slot = Some(t),
                    Err(_) => return,
                }
            }
            if let Some(r) = slot.as_ref().and_then(TakeTicket::try_wait) {
                *slot = None;
                match r {
                    Ok(d) => {
                        got += 1;
                        progressed = true;
                        if out.send(d).is_err() {
                            return;
                        }
                    }
                    Err(_) => return,
                }
            }
        }
        if !progressed {
            thread::sleep(Duration::from_micros(200));
        }
    }
}

pub fn run_demo(connector: &Connector, cfg: &DemoConfig) -> Result<DemoReport, DemoError> {
    let automaton = derive(connector, &HideMode::Internal)?;
    run_automaton(&automaton, cfg)
}

/// Runs the harness against an already derived automaton.
pub fn run_automaton(automaton: &ConstraintAutomaton, cfg: &DemoConfig) -> Result<DemoReport, DemoError> {
    let mut coordinator = open(automaton, cfg.seed)?;
    let by_dir = |d: Direction| -> Vec<Port> {
        coordinator.ports().filter(|p| p.direction() == d).cloned().collect()
    };
    let (sources, sinks) = (by_dir(Direction::Input), by_dir(Direction::Output));
    if sources.is_empty() || sinks.is_empty() {
        return Err(DemoError::NotRunnable(automaton.name.clone()));
    }

    // producer k's items, in write order
    let plans: Vec<(Port, Vec<Literal>)> = (0..cfg.producers)
        .map(|k| {
            let port = sources[k % sources.len()].clone();
            let data = (0..cfg.items).map(|i| payload(cfg, port.name(), k, i)).collect();
            (port, data)
        })
        .collect();
    let expected: Vec<Literal> = plans
        .iter()
        .flat_map(|(port, data)| {
            let lossy = cfg.foo_bar_port.as_deref() == Some(port.name());
            data.iter()
                .filter(move |d| !lossy || **d == Literal::str("foo"))
                .cloned()
        })
        .collect();

    let events = coordinator.subscribe();
    let log = cfg.log_events;
    let collector = thread::spawn(move || {
        let mut fires = Vec::new();
        for e in events {
            if log {
                eprintln!("{e}");
            }
            if matches!(e, Event::Fire { .. }) {
                fires.push(e);
            }
        }
        fires
    });

    let deadline = Instant::now() + cfg.timeout;
    let (delivered, timed_out) = if cfg.serial {
        drive_serial(&coordinator, plans, &sinks, expected.len(), deadline)
    } else {
        drive_threads(&mut coordinator, plans, sinks, expected.len(), cfg.policy, deadline)
    };
    let stats = coordinator.stop();
    drop(coordinator);
    let fires = collector.join().unwrap_or_default();
    Ok(DemoReport {
        expected,
        delivered,
        stats,
        fires,
        timed_out,
    })
}

fn drive_threads(
    coordinator: &mut Coordinator,
    plans: Vec<(Port, Vec<Literal>)>,
    sinks: Vec<Port>,
    count: usize,
    policy: Policy,
    deadline: Instant,
) -> (Vec<Literal>, bool) {
    coordinator.start(policy);
    let producers: Vec<_> = plans
        .into_iter()
        .map(|(port, data)| {
            thread::spawn(move || {
                for d in data {
                    if port.write(d).is_err() {
                        return;
                    }
                }
            })
        })
        .collect();
    let (tx, rx) = mpsc::channel();
    let consumer = thread::spawn(move || consume(sinks, count, tx));

    let mut delivered = Vec::with_capacity(count);
    let mut timed_out = false;
    while delivered.len() < count {
        let left = deadline.saturating_duration_since(Instant::now());
        match rx.recv_timeout(left) {
            Ok(d) => delivered.push(d),
            Err(mpsc::RecvTimeoutError::Timeout) => {
                timed_out = true;
                break;
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => break,
        }
    }
    // the last delivery can precede a lossy write that is still queued
    for p in &producers {
        while !timed_out && !p.is_finished() && Instant::now() < deadline {
            thread::sleep(Duration::from_millis(1));
        }
    }
    coordinator.stop();
    for p in producers {
        let _ = p.join();
    }
    let _ = consumer.join();
    (delivered, timed_out)
}

/// Single-threaded driver: keeps one write per producer and one take per
/// sink pending, and steps the coordinator itself.
fn drive_serial(
    coordinator: &Coordinator,
    plans: Vec<(Port, Vec<Literal>)>,
    sinks: &[Port],
    count: usize,
    deadline: Instant,
) -> (Vec<Literal>, bool) {
    let mut writes: Vec<(Port, std::vec::IntoIter<Literal>, Option<WriteTicket>)> = plans
        .into_iter()
        .map(|(p, d)| (p, d.into_iter(), None))
        .collect();
    let mut takes: Vec<Option<TakeTicket>> = sinks.iter().map(|_| None).collect();
    let mut delivered = Vec::with_capacity(count);
    loop {
        let producing = writes.iter().any(|(_, rest, t)| t.is_some() || rest.len() > 0);
        if delivered.len() >= count && !producing {
            return (delivered, false);
        }
        if Instant::now() >= deadline {
            return (delivered, true);
        }
        for (port, rest, ticket) in &mut writes {
            if ticket.is_none() {
                if let Some(d) = rest.next() {
                    match port.submit_write(d) {
                        Ok(t) => *ticket = Some(t),
                        Err(_) => return (delivered, false),
                    }
                }
            }
        }
        if delivered.len() < count {
            for (port, slot) in sinks.iter().zip(takes.iter_mut()) {
                if slot.is_none() {
                    match port.submit_take() {
                        Ok(t) => *slot = Some(t),
                        Err(_) => return (delivered, false),
                    }
                }
            }
        }
        coordinator.step();
        for (_, _, ticket) in &mut writes {
            if ticket.as_ref().is_some_and(|t| t.try_wait().is_some()) {
                *ticket = None;
            }
        }
        for slot in &mut takes {
            if let Some(r) = slot.as_ref().and_then(TakeTicket::try_wait) {
                *slot = None;
                if let Ok(d) = r {
                    delivered.push(d);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merger_delivers_everything() {
        let cfg = DemoConfig {
            items: 50,
            ..DemoConfig::for_builtin("merger")
        };
        let r = run_demo(&builtin("merger").unwrap(), &cfg).unwrap();
        assert!(!r.timed_out);
        assert!(r.is_exact());
        assert_eq!(r.fires.len(), 200);
    }

    #[test]
    fn sequencer_drops_bar() {
        let cfg = DemoConfig {
            items: 6,
            ..DemoConfig::for_builtin("sequencer")
        };
        let r = run_demo(&builtin("sequencer").unwrap(), &cfg).unwrap();
        assert!(r.is_exact(), "{r:?}");
        assert_eq!(r.expected.len(), 3 + 6);
        // every A write and every delivery fires once
        assert_eq!(r.stats.fired, 6 + 6 + 9);
    }

    #[test]
    fn serial_mode_is_reproducible() {
        let cfg = DemoConfig {
            items: 5,
            serial: true,
            ..DemoConfig::for_builtin("alternator")
        };
        let c = builtin("alternator").unwrap();
        let a = run_demo(&c, &cfg).unwrap();
        let b = run_demo(&c, &cfg).unwrap();
        assert!(a.is_exact());
        assert_eq!(a.fires, b.fires);
        assert_eq!(a.delivered, b.delivered);
    }

    #[test]
    fn builtins_parse_from_fixture_text() {
        assert_eq!(builtin("merger"), Some(fixtures::merger_connector()));
        assert_eq!(builtin("sequencer"), Some(fixtures::sequencer_connector()));
        assert_eq!(builtin("nope"), None);
    }

    #[test]
    fn starved_connector_times_out() {
        let cfg = DemoConfig {
            producers: 1,
            items: 2,
            timeout: Duration::from_millis(200),
            ..DemoConfig::for_builtin("alternator")
        };
        let r = run_demo(&builtin("alternator").unwrap(), &cfg).unwrap();
        assert!(r.timed_out);
        assert!(r.delivered.is_empty());
    }
}
