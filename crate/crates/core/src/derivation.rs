//! Compositional semantics: every channel and every node gets a small
//! constraint automaton over channel-end ports, the automata are joined by
//! product, and the end ports are hidden.
//!
//! End ports are named `<node>.<k>`, numbered from 1 per node in channel
//! declaration order (source end before sink end). A node's own port carries
//! the node name and witnesses the datum passing through it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::automata::{
    hide, product, AutomataError, ConstraintAutomaton, Direction, Guard, Term,
};
use crate::connector::{
    classify_nodes, Channel, ChannelKind, Connector, ConnectorError, FilterConstraint, NodeRole,
    Visibility,
};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum HideMode {
    /// Keep every node port.
    #[default]
    None,
    /// Hide the ports of internal nodes.
    Internal,
    /// Hide exactly these node ports.
    Custom(BTreeSet<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DerivationError {
    #[error(transparent)]
    Invalid(#[from] ConnectorError),
    #[error("node {0} has no channel ends")]
    NoEnds(String),
    #[error(transparent)]
    Automata(#[from] AutomataError),
}

fn eq_ports(a: &str, b: &str) -> Guard {
    Guard::eq(Term::port(a), Term::port(b))
}

/// Automaton of one channel over its end ports `(first, second)`. The buffer
/// of a `fifo1` is the cell named after the channel id.
pub fn channel_automaton(channel: &Channel, ends: (&str, &str)) -> ConstraintAutomaton {
    let (src, snk) = ends;
    let mut a = ConstraintAutomaton::new(channel.id.clone())
        .with_port(src, Direction::Internal)
        .with_port(snk, Direction::Internal);
    match &channel.kind {
        ChannelKind::Sync => {
            let s = a.add_state("s");
            a.add_transition(s, s, &[src, snk], eq_ports(snk, src));
        }
        ChannelKind::SyncDrain => {
            let s = a.add_state("s");
            a.add_transition(s, s, &[src, snk], Guard::True);
        }
        ChannelKind::Fifo1 { initial } => {
            let cell = channel.id.as_str();
            a = a.with_cell(cell, initial.clone());
            let e = a.add_state("e");
            let f = a.add_state("f");
            if initial.is_some() {
                a.initial = f;
            }
            a.add_transition(e, f, &[src], Guard::eq(Term::post(cell), Term::port(src)));
            a.add_transition(f, e, &[snk], Guard::eq(Term::port(snk), Term::pre(cell)));
        }
        ChannelKind::Filter(c) => {
            let (pass, lose) = match c {
                FilterConstraint::Equals(l) => (
                    Guard::eq(Term::port(src), Term::Lit(l.clone())),
                    Guard::neq(Term::port(src), Term::Lit(l.clone())),
                ),
                FilterConstraint::NotEquals(l) => (
                    Guard::neq(Term::port(src), Term::Lit(l.clone())),
                    Guard::eq(Term::port(src), Term::Lit(l.clone())),
                ),
            };
            let s = a.add_state("s");
            a.add_transition(s, s, &[src, snk], Guard::and([pass, eq_ports(snk, src)]));
            a.add_transition(s, s, &[src], lose);
        }
    }
    a
}

/// Automaton of a node with incoming ends `ins` and outgoing ends `outs`.
/// A node takes from one incoming end at a time and replicates to all
/// outgoing ends; its own port carries the datum.
pub fn node_automaton(
    node: &str,
    ins: &[String],
    outs: &[String],
) -> Result<ConstraintAutomaton, DerivationError> {
    if ins.is_empty() && outs.is_empty() {
        return Err(DerivationError::NoEnds(node.to_string()));
    }
    let mut a = ConstraintAutomaton::new(node).with_port(node, Direction::Internal);
    for p in ins.iter().chain(outs) {
        a = a.with_port(p, Direction::Internal);
    }
    let s = a.add_state("s");
    let replicate = || outs.iter().map(|o| eq_ports(o, node));
    if ins.is_empty() {
        let mut sync: Vec<&str> = vec![node];
        sync.extend(outs.iter().map(String::as_str));
        a.add_transition(s, s, &sync, Guard::and(replicate()));
    } else {
        for i in ins {
            let mut sync: Vec<&str> = vec![node, i];
            sync.extend(outs.iter().map(String::as_str));
            let guard = Guard::and(std::iter::once(eq_ports(node, i)).chain(replicate()));
            a.add_transition(s, s, &sync, guard);
        }
    }
    Ok(a)
}

/// Per node: (in-end ports, out-end ports).
type NodeEnds = BTreeMap<String, (Vec<String>, Vec<String>)>;

/// Per-node incoming and outgoing end ports, and per-channel end pairs.
fn name_ends(connector: &Connector) -> (NodeEnds, Vec<(String, String)>) {
    let mut counter: BTreeMap<String, usize> = BTreeMap::new();
    let mut next = |node: &str| {
        let k = counter.entry(node.to_string()).or_insert(0);
        *k += 1;
        format!("{node}.{k}")
    };
    let mut nodes: BTreeMap<String, (Vec<String>, Vec<String>)> = connector
        .nodes
        .iter()
        .map(|d| (d.id.to_string(), (Vec::new(), Vec::new())))
        .collect();
    let mut ends = Vec::new();
    for ch in &connector.channels {
        let (a, b) = (ch.ends.0.as_str(), ch.ends.1.as_str());
        let (ea, eb) = (next(a), next(b));
        // a channel's source end draws from its node
        nodes.get_mut(a).expect("declared").1.push(ea.clone());
        if ch.kind.is_directed() {
            nodes.get_mut(b).expect("declared").0.push(eb.clone());
        } else {
            nodes.get_mut(b).expect("declared").1.push(eb.clone());
        }
        ends.push((ea, eb));
    }
    (nodes, ends)
}

/// All primitive automata: channels in declaration order, then nodes in
/// declaration order.
fn primitives(connector: &Connector) -> Result<Vec<ConstraintAutomaton>, DerivationError> {
    let (node_ends, channel_ends) = name_ends(connector);
    let mut out: Vec<ConstraintAutomaton> = connector
        .channels
        .iter()
        .zip(&channel_ends)
        .map(|(ch, (a, b))| channel_automaton(ch, (a, b)))
        .collect();
    for d in &connector.nodes {
        let (ins, outs) = &node_ends[d.id.as_str()];
        out.push(node_automaton(d.id.as_str(), ins, outs)?);
    }
    Ok(out)
}

/// Breadth-first order over the port-sharing graph, so each product step
/// joins an automaton that already shares ports with the accumulated one.
fn connected_order(prims: &[ConstraintAutomaton], start: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(prims.len());
    let mut seen = vec![false; prims.len()];
    let starts = std::iter::once(start).chain(0..prims.len());
    for s in starts {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for (j, p) in prims.iter().enumerate() {
                if !seen[j] && p.ports.keys().any(|x| prims[i].ports.contains_key(x)) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    order
}

/// Drops transitions that combine independent activity: the primitives
/// taking part must form a single group when linked by shared ports.
fn drop_concurrent(a: &mut ConstraintAutomaton, prims: &[ConstraintAutomaton]) {
    a.transitions.retain(|t| {
        let mut groups: Vec<BTreeSet<&String>> = Vec::new();
        for p in prims {
            let part: BTreeSet<&String> = t.sync.iter().filter(|x| p.ports.contains_key(*x)).collect();
            if part.is_empty() {
                continue;
            }
            let (joined, rest): (Vec<_>, Vec<_>) =
                groups.into_iter().partition(|g| !g.is_disjoint(&part));
            let mut merged = part;
            for g in joined {
                merged.extend(g);
            }
            groups = rest;
            groups.push(merged);
        }
        groups.len() <= 1
    });
}

fn fold(
    connector: &Connector,
    prims: &[ConstraintAutomaton],
    order: &[usize],
    mode: &HideMode,
) -> Result<ConstraintAutomaton, DerivationError> {
    let roles = classify_nodes(connector)?;
    let mut acc = ConstraintAutomaton::new(connector.name.clone());
    acc.add_state("_");
    for &i in order {
        acc = product(&acc, &prims[i])?;
    }
    drop_concurrent(&mut acc, prims);

    let node_names: BTreeSet<&str> = connector.nodes.iter().map(|d| d.id.as_str()).collect();
    let mut hidden: BTreeSet<String> = acc
        .ports
        .keys()
        .filter(|p| !node_names.contains(p.as_str()))
        .cloned()
        .collect();
    match mode {
        HideMode::None => {}
        HideMode::Internal => hidden.extend(
            connector
                .nodes
                .iter()
                .filter(|d| d.visibility == Visibility::Internal)
                .map(|d| d.id.to_string()),
        ),
        HideMode::Custom(set) => hidden.extend(set.iter().cloned()),
    }
    let mut out = hide(&acc, &hidden)?.relabel_bfs("q");
    out.name = connector.name.clone();
    for d in &connector.nodes {
        let dir = match (d.visibility, roles[&d.id].role()) {
            (Visibility::Boundary, NodeRole::Source) => Direction::Input,
            (Visibility::Boundary, NodeRole::Sink) => Direction::Output,
            _ => Direction::Internal,
        };
        if let Some(slot) = out.ports.get_mut(d.id.as_str()) {
            *slot = dir;
        }
    }
    Ok(out)
}

/// Derives the constraint automaton of a valid connector.
pub fn derive(connector: &Connector, mode: &HideMode) -> Result<ConstraintAutomaton, DerivationError> {
    classify_nodes(connector)?;
    let prims = primitives(connector)?;
    let order = connected_order(&prims, 0);
    fold(connector, &prims, &order, mode)
}
