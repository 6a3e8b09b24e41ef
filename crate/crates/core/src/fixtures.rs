//! Reference connectors and their expected automata, shared by tests, the
//! CLI demos, and the acceptance suite.

use crate::automata::{ConstraintAutomaton, Direction, Guard, Term};
use crate::connector::{ChannelKind, Connector, FilterConstraint, Literal, Visibility};

pub const MERGER_REO: &str = include_str!("../fixtures/merger.reo");
pub const ALTERNATOR_REO: &str = include_str!("../fixtures/alternator.reo");
pub const SEQUENCER_REO: &str = include_str!("../fixtures/sequencer.reo");

pub fn merger_connector() -> Connector {
    Connector::new("MergerWithBuffer")
        .node("A", Visibility::Boundary)
        .node("B", Visibility::Boundary)
        .node("D", Visibility::Boundary)
        .node("C", Visibility::Internal)
        .channel(ChannelKind::Sync, "A", "C")
        .channel(ChannelKind::Sync, "B", "C")
        .channel(ChannelKind::Fifo1 { initial: None }, "C", "D")
}

pub fn alternator_connector() -> Connector {
    Connector::new("AlternatorWithBuffer")
        .node("A", Visibility::Boundary)
        .node("B", Visibility::Boundary)
        .node("D", Visibility::Boundary)
        .node("C", Visibility::Internal)
        .channel(ChannelKind::Sync, "A", "C")
        .channel(ChannelKind::Fifo1 { initial: None }, "B", "C")
        .channel(ChannelKind::SyncDrain, "A", "B")
        .channel(ChannelKind::Fifo1 { initial: None }, "C", "D")
}

pub fn sequencer_connector() -> Connector {
    let mut c = Connector::new("SequencerWithBuffer");
    for n in ["A", "B", "D"] {
        c = c.node(n, Visibility::Boundary);
    }
    for n in ["A1", "A2", "B2", "C", "X1", "X2", "X3", "X4"] {
        c = c.node(n, Visibility::Internal);
    }
    c.channel(ChannelKind::Sync, "A2", "C")
        .channel(ChannelKind::Sync, "B2", "C")
        .channel(ChannelKind::Sync, "B", "B2")
        .channel(ChannelKind::Fifo1 { initial: None }, "C", "D")
        .channel(ChannelKind::Fifo1 { initial: None }, "X1", "X2")
        .channel(ChannelKind::Sync, "X2", "X3")
        .channel(ChannelKind::Fifo1 { initial: Some(Literal::str("tok")) }, "X3", "X4")
        .channel(ChannelKind::Sync, "X4", "X1")
        .channel(ChannelKind::SyncDrain, "X1", "A1")
        .channel(ChannelKind::SyncDrain, "X3", "B2")
        .channel(ChannelKind::Sync, "A", "A1")
        .channel(
            ChannelKind::Filter(FilterConstraint::Equals(Literal::str("foo"))),
            "A1",
            "A2",
        )
}

/// Port automaton of the merger with its internal node visible.
pub fn merger_automaton() -> ConstraintAutomaton {
    let mut a = ConstraintAutomaton::new("MergerWithBuffer")
        .with_port("A", Direction::Input)
        .with_port("B", Direction::Input)
        .with_port("C", Direction::Internal)
        .with_port("D", Direction::Output);
    let q0 = a.add_state("q0");
    let q1 = a.add_state("q1");
    a.add_transition(q0, q1, &["A", "C"], Guard::True);
    a.add_transition(q0, q1, &["B", "C"], Guard::True);
    a.add_transition(q1, q0, &["D"], Guard::True);
    a
}

/// Port automaton of the alternator with its internal node visible.
pub fn alternator_automaton() -> ConstraintAutomaton {
    let mut a = ConstraintAutomaton::new("AlternatorWithBuffer")
        .with_port("A", Direction::Input)
        .with_port("B", Direction::Input)
        .with_port("C", Direction::Internal)
        .with_port("D", Direction::Output);
    let s0 = a.add_state("q0");
    let s1 = a.add_state("q1");
    let s2 = a.add_state("q2");
    let s3 = a.add_state("q3");
    a.add_transition(s0, s1, &["A", "B", "C"], Guard::True);
    a.add_transition(s1, s2, &["D"], Guard::True);
    a.add_transition(s2, s3, &["C"], Guard::True);
    a.add_transition(s3, s0, &["D"], Guard::True);
    a
}

/// The sequencer with internal nodes hidden: a one-place buffer `m` fed
/// alternately by A (only "foo" gets through) and B.
pub fn sequencer_automaton() -> ConstraintAutomaton {
    let foo_lit = || Term::str("foo");
    let mut a = ConstraintAutomaton::new("SequencerWithBuffer")
        .with_port("A", Direction::Input)
        .with_port("B", Direction::Input)
        .with_port("D", Direction::Output)
        .with_cell("m", None);
    let q = a.add_state("Q");
    let r = a.add_state("R");
    let t = a.add_state("T");
    let s = a.add_state("S");
    a.add_transition(
        q,
        r,
        &["A"],
        Guard::and([
            Guard::eq(Term::port("A"), foo_lit()),
            Guard::eq(Term::post("m"), Term::port("A")),
        ]),
    );
    a.add_transition(q, t, &["A"], Guard::neq(Term::port("A"), foo_lit()));
    a.add_transition(r, t, &["D"], Guard::eq(Term::port("D"), Term::pre("m")));
    a.add_transition(t, s, &["B"], Guard::eq(Term::post("m"), Term::port("B")));
    a.add_transition(s, q, &["D"], Guard::eq(Term::port("D"), Term::pre("m")));
    a.add_transition(s, r, &["A"], Guard::neq(Term::port("A"), foo_lit()));
    a
}

/// Parses as valid but reaches a deadlock immediately: the drain needs A and
/// B together, while the prefilled buffer blocks A.
pub const DEADLOCK_REO: &str = include_str!("../fixtures/deadlock.reo");
