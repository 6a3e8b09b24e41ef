//! Connectors: graphs of named nodes joined by primitive channels.
//!
//! A [`Connector`] is plain data. [`validate`] reports every well-formedness
//! violation, and [`classify_nodes`] derives how data flows through each node
//! from the channel ends attached to it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// A datum moved through a connector.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Literal {
    Str(String),
    Int(i64),
}

impl Literal {
    pub fn str(s: impl Into<String>) -> Self {
        Literal::Str(s.into())
    }
}

impl fmt::Display for Literal {
    /// Renders the literal in connector-language syntax.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(i) => write!(f, "{i}"),
            Literal::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
        }
    }
}

/// Returns true for `[A-Za-z][A-Za-z0-9_]*`.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid node identifier {0:?}")]
pub struct InvalidIdentifier(pub String);

impl NodeId {
    pub fn new(name: impl Into<String>) -> Result<Self, InvalidIdentifier> {
        let name = name.into();
        if is_identifier(&name) {
            Ok(NodeId(name))
        } else {
            Err(InvalidIdentifier(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Predicate applied by a filter channel to the datum entering its source end.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FilterConstraint {
    Equals(Literal),
    NotEquals(Literal),
}

impl FilterConstraint {
    pub fn accepts(&self, datum: &Literal) -> bool {
        match self {
            FilterConstraint::Equals(l) => datum == l,
            FilterConstraint::NotEquals(l) => datum != l,
        }
    }
}

/// The closed set of primitive channels. New channel kinds are added here and
/// given an automaton in `derivation::channel_automaton`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ChannelKind {
    Sync,
    Fifo1 { initial: Option<Literal> },
    SyncDrain,
    Filter(FilterConstraint),
}

impl ChannelKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            ChannelKind::Sync => "sync",
            ChannelKind::Fifo1 { .. } => "fifo1",
            ChannelKind::SyncDrain => "syncdrain",
            ChannelKind::Filter(_) => "filter",
        }
    }

    /// Whether the second end delivers data into its node. A drain has two
    /// source-side ends.
    pub fn is_directed(&self) -> bool {
        !matches!(self, ChannelKind::SyncDrain)
    }
}

/// A channel with its two ends. For directed kinds `ends.0` is the source
/// node and `ends.1` the sink node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Channel {
    pub id: String,
    pub kind: ChannelKind,
    pub ends: (NodeId, NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Visibility {
    Boundary,
    Internal,
}

impl Visibility {
    pub fn keyword(self) -> &'static str {
        match self {
            Visibility::Boundary => "boundary",
            Visibility::Internal => "internal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeDecl {
    pub id: NodeId,
    pub visibility: Visibility,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connector {
    pub name: String,
    pub nodes: Vec<NodeDecl>,
    pub channels: Vec<Channel>,
}

impl Connector {
    pub fn new(name: impl Into<String>) -> Self {
        Connector {
            name: name.into(),
            nodes: Vec::new(),
            channels: Vec::new(),
        }
    }

    /// Builder helper used by tests and fixtures; panics on a bad identifier.
    pub fn node(mut self, name: &str, visibility: Visibility) -> Self {
        let id = NodeId::new(name).expect("valid node identifier");
        self.nodes.push(NodeDecl { id, visibility });
        self
    }

    /// Appends a channel with the next positional id.
    pub fn channel(mut self, kind: ChannelKind, from: &str, to: &str) -> Self {
        let id = channel_id(self.channels.len());
        let ends = (
            NodeId::new(from).expect("valid node identifier"),
            NodeId::new(to).expect("valid node identifier"),
        );
        self.channels.push(Channel { id, kind, ends });
        self
    }

    pub fn visibility(&self, node: &NodeId) -> Option<Visibility> {
        self.nodes
            .iter()
            .find(|d| &d.id == node)
            .map(|d| d.visibility)
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes
            .iter()
            .filter(|d| d.visibility == Visibility::Boundary)
            .map(|d| &d.id)
    }
}

/// Positional channel id: the `index`-th channel (0-based) is `ch{index+1}`.
pub fn channel_id(index: usize) -> String {
    format!("ch{}", index + 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Violation {
    DuplicateNode(NodeId),
    DuplicateChannel(String),
    UndeclaredNode { channel: String, node: NodeId },
    DrainLoop { channel: String, node: NodeId },
    UnconnectedNode(NodeId),
    MixedBoundary(NodeId),
}

impl Violation {
    /// The node or channel the violation is about.
    pub fn subject(&self) -> &str {
        match self {
            Violation::DuplicateNode(n)
            | Violation::UnconnectedNode(n)
            | Violation::MixedBoundary(n) => n.as_str(),
            Violation::DuplicateChannel(c)
            | Violation::UndeclaredNode { channel: c, .. }
            | Violation::DrainLoop { channel: c, .. } => c,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateNode(n) => write!(f, "duplicate node {n}"),
            Violation::DuplicateChannel(c) => write!(f, "duplicate channel id {c}"),
            Violation::UndeclaredNode { node, .. } => write!(f, "undeclared node {node}"),
            Violation::DrainLoop { channel, node } => {
                write!(f, "syncdrain {channel} has both ends on node {node}")
            }
            Violation::UnconnectedNode(n) => write!(f, "node {n} has no channel ends"),
            Violation::MixedBoundary(n) => write!(f, "boundary node {n} is mixed"),
        }
    }
}

/// Every violated well-formedness rule; empty iff the connector is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeRole {
    Source,
    Sink,
    Mixed,
    /// No channel ends at all; only seen on invalid connectors.
    Isolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeClassification {
    pub incoming: usize,
    pub outgoing: usize,
}

impl NodeClassification {
    pub fn role(&self) -> NodeRole {
        match (self.incoming, self.outgoing) {
            (0, 0) => NodeRole::Isolated,
            (0, _) => NodeRole::Source,
            (_, 0) => NodeRole::Sink,
            _ => NodeRole::Mixed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConnectorError {
    #[error("invalid connector {name}: {report}")]
    Invalid {
        name: String,
        report: ValidationReport,
    },
}

/// Incoming/outgoing end counts for every declared node, without checking
/// validity. Ends on undeclared nodes are ignored.
pub fn count_ends(connector: &Connector) -> BTreeMap<NodeId, NodeClassification> {
    let mut counts: BTreeMap<NodeId, NodeClassification> = connector
        .nodes
        .iter()
        .map(|d| {
            (
                d.id.clone(),
                NodeClassification {
                    incoming: 0,
                    outgoing: 0,
                },
            )
        })
        .collect();
    for ch in &connector.channels {
        if let Some(c) = counts.get_mut(&ch.ends.0) {
            c.outgoing += 1;
        }
        if let Some(c) = counts.get_mut(&ch.ends.1) {
            if ch.kind.is_directed() {
                c.incoming += 1;
            } else {
                c.outgoing += 1;
            }
        }
    }
    counts
}

pub fn validate(connector: &Connector) -> ValidationReport {
    let mut violations = Vec::new();

    let mut seen = BTreeSet::new();
    for d in &connector.nodes {
        if !seen.insert(&d.id) {
            violations.push(Violation::DuplicateNode(d.id.clone()));
        }
    }
    let mut seen_channels = BTreeSet::new();
    for ch in &connector.channels {
        if !seen_channels.insert(&ch.id) {
            violations.push(Violation::DuplicateChannel(ch.id.clone()));
        }
        for node in [&ch.ends.0, &ch.ends.1] {
            let already = violations.iter().any(|v| {
                matches!(v, Violation::UndeclaredNode { node: n, .. } if n == node)
            });
            if !seen.contains(node) && !already {
                violations.push(Violation::UndeclaredNode {
                    channel: ch.id.clone(),
                    node: node.clone(),
                });
            }
        }
        if ch.kind == ChannelKind::SyncDrain && ch.ends.0 == ch.ends.1 {
            violations.push(Violation::DrainLoop {
                channel: ch.id.clone(),
                node: ch.ends.0.clone(),
            });
        }
    }

    let counts = count_ends(connector);
    let mut reported = BTreeSet::new();
    for d in &connector.nodes {
        if !reported.insert(&d.id) {
            continue;
        }
        let c = counts[&d.id];
        match c.role() {
            NodeRole::Isolated => violations.push(Violation::UnconnectedNode(d.id.clone())),
            NodeRole::Mixed if d.visibility == Visibility::Boundary => {
                violations.push(Violation::MixedBoundary(d.id.clone()))
            }
            _ => {}
        }
    }
    ValidationReport { violations }
}

/// Classifies every declared node of a valid connector.
pub fn classify_nodes(
    connector: &Connector,
) -> Result<BTreeMap<NodeId, NodeClassification>, ConnectorError> {
    let report = validate(connector);
    if !report.is_valid() {
        return Err(ConnectorError::Invalid {
            name: connector.name.clone(),
            report,
        });
    }
    Ok(count_ends(connector))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn id(s: &str) -> NodeId {
        NodeId::new(s).unwrap()
    }

    #[test]
    fn merger_is_valid() {
        assert!(validate(&fixtures::merger_connector()).is_valid());
    }

    #[test]
    fn undeclared_node_reported_once() {
        let c = Connector::new("bad")
            .node("A", Visibility::Boundary)
            .channel(ChannelKind::Sync, "A", "X");
        let report = validate(&c);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].to_string(), "undeclared node X");
    }

    #[test]
    fn mixed_boundary_reported() {
        let c = Connector::new("bad")
            .node("A", Visibility::Boundary)
            .node("C", Visibility::Boundary)
            .node("D", Visibility::Boundary)
            .channel(ChannelKind::Sync, "A", "C")
            .channel(ChannelKind::Sync, "C", "D");
        let report = validate(&c);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].to_string(), "boundary node C is mixed");
    }

    #[test]
    fn drain_loop_and_isolated_node() {
        let c = Connector::new("bad")
            .node("A", Visibility::Boundary)
            .node("Z", Visibility::Internal)
            .channel(ChannelKind::SyncDrain, "A", "A");
        let report = validate(&c);
        assert!(report
            .violations
            .contains(&Violation::DrainLoop { channel: "ch1".into(), node: id("A") }));
        assert!(report.violations.contains(&Violation::UnconnectedNode(id("Z"))));
        assert_eq!(count_ends(&c)[&id("Z")].role(), NodeRole::Isolated);
        assert!(classify_nodes(&c).is_err());
    }

    #[test]
    fn classify_merger() {
        let m = classify_nodes(&fixtures::merger_connector()).unwrap();
        assert_eq!(m[&id("A")], NodeClassification { incoming: 0, outgoing: 1 });
        assert_eq!(m[&id("C")], NodeClassification { incoming: 2, outgoing: 1 });
        assert_eq!(m[&id("D")], NodeClassification { incoming: 1, outgoing: 0 });
        assert_eq!(m[&id("A")].role(), NodeRole::Source);
        assert_eq!(m[&id("C")].role(), NodeRole::Mixed);
        assert_eq!(m[&id("D")].role(), NodeRole::Sink);
    }

    #[test]
    fn classify_alternator_counts_drain_ends_as_outgoing() {
        let m = classify_nodes(&fixtures::alternator_connector()).unwrap();
        assert_eq!(m[&id("A")], NodeClassification { incoming: 0, outgoing: 2 });
        assert_eq!(m[&id("B")], NodeClassification { incoming: 0, outgoing: 2 });
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("A1_x"));
        assert!(!is_identifier("1A"));
        assert!(!is_identifier(""));
        assert!(!is_identifier("A.1"));
        assert!(NodeId::new("_a").is_err());
    }

    #[test]
    fn literal_display_escapes() {
        assert_eq!(Literal::str("a\"b\\").to_string(), r#""a\"b\\""#);
        assert_eq!(Literal::Int(-3).to_string(), "-3");
        assert_ne!(Literal::str("1"), Literal::Int(1));
    }
}
