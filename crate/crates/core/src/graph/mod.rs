//! Temporal edge lists, graph snapshots and the altered edge set between two
//! snapshots.

mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::json;
use crate::linalg::Matrix;

pub use io::{load_features, load_labels, load_temporal_edges, parse_temporal_edges, EdgeFormat};

/// Dense node index in `[0, |V|)`, stable across every snapshot of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for NodeId {
    fn from(v: usize) -> Self {
        NodeId(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Node,
    Link,
    Graph,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Node => "node",
            Task::Link => "link",
            Task::Graph => "graph",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node" => Ok(Task::Node),
            "link" => Ok(Task::Link),
            "graph" => Ok(Task::Graph),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

/// Whether an edge appears only in the destination (`Added`) or only in the
/// source (`Removed`) snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Added,
    Removed,
}

impl ChangeKind {
    pub fn flipped(self) -> Self {
        match self {
            ChangeKind::Added => ChangeKind::Removed,
            ChangeKind::Removed => ChangeKind::Added,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChangeKind::Added => "added",
            ChangeKind::Removed => "removed",
        }
    }
}

impl fmt::Display for ChangeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TemporalEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub time: i64,
}

/// Maps dense node ids back to the raw identifiers found in the input file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMap {
    raw: Vec<u64>,
}

impl IdMap {
    /// Builds a map from a set of raw ids; dense ids follow ascending raw order.
    pub fn from_raw_ids(raw: impl IntoIterator<Item = u64>) -> Self {
        let set: BTreeSet<u64> = raw.into_iter().collect();
        Self {
            raw: set.into_iter().collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            raw: (0..n as u64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn dense(&self, raw: u64) -> Option<NodeId> {
        self.raw.binary_search(&raw).ok().map(NodeId)
    }

    pub fn raw(&self, id: NodeId) -> u64 {
        self.raw[id.0]
    }

    pub fn raw_ids(&self) -> &[u64] {
        &self.raw
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemporalEdgeList {
    pub edges: Vec<TemporalEdge>,
    pub id_map: IdMap,
}

impl TemporalEdgeList {
    pub fn num_nodes(&self) -> usize {
        self.id_map.len()
    }
}

/// A graph edge. Undirected snapshots store edges canonically with
/// `src <= dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
}

impl Edge {
    pub fn new(src: impl Into<NodeId>, dst: impl Into<NodeId>) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
        }
    }

    pub fn canonical(self, directed: bool) -> Self {
        if directed || self.src <= self.dst {
            self
        } else {
            Edge {
                src: self.dst,
                dst: self.src,
            }
        }
    }

    pub fn is_self_loop(self) -> bool {
        self.src == self.dst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotOptions {
    /// Keep edges one-directional instead of mirroring them.
    pub directed: bool,
    /// Give every node an arc to itself so it receives its own message.
    pub self_loops: bool,
}

impl Default for SnapshotOptions {
    fn default() -> Self {
        Self {
            directed: false,
            self_loops: true,
        }
    }
}

/// Immutable graph with per-node sorted in-neighbor lists and node features.
///
/// `neighbors[v]` lists every `u` with an arc `u → v`, i.e. the nodes whose
/// messages `v` aggregates. Self-loops added by [`SnapshotOptions::self_loops`]
/// appear in the lists but not in [`GraphSnapshot::edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSnapshot {
    options: SnapshotOptions,
    neighbors: Vec<Vec<NodeId>>,
    edges: BTreeSet<Edge>,
    features: Matrix,
}

impl GraphSnapshot {
    /// Builds a snapshot from an edge collection. Duplicate edges collapse.
    pub fn from_edges<I>(num_nodes: usize, edges: I, features: Matrix, options: SnapshotOptions) -> Result<Self>
    where
        I: IntoIterator<Item = Edge>,
    {
        if features.rows() != num_nodes {
            return Err(Error::dim(format!(
                "feature matrix has {} rows but the graph has {num_nodes} nodes",
                features.rows()
            )));
        }
        let mut set = BTreeSet::new();
        for e in edges {
            if e.src.0 >= num_nodes {
                return Err(Error::UnknownNode(e.src.0));
            }
            if e.dst.0 >= num_nodes {
                return Err(Error::UnknownNode(e.dst.0));
            }
            set.insert(e.canonical(options.directed));
        }
        let mut neighbors: Vec<Vec<NodeId>> = vec![Vec::new(); num_nodes];
        for e in &set {
            neighbors[e.dst.0].push(e.src);
            if !options.directed {
                neighbors[e.src.0].push(e.dst);
            }
        }
        if options.self_loops {
            for (v, list) in neighbors.iter_mut().enumerate() {
                list.push(NodeId(v));
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            options,
            neighbors,
            edges: set,
            features,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.neighbors.len()
    }

    /// Number of distinct edges, not counting automatic self-loops.
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn options(&self) -> SnapshotOptions {
        self.options
    }

    pub fn is_directed(&self) -> bool {
        self.options.directed
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    /// In-neighbors of `v` (sources of arcs into `v`), sorted ascending.
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.neighbors[v.0]
    }

    pub fn has_arc(&self, from: NodeId, to: NodeId) -> bool {
        self.neighbors
            .get(to.0)
            .is_some_and(|list| list.binary_search(&from).is_ok())
    }

    /// Every edge the message passing actually uses, automatic self-loops
    /// included, in canonical form.
    pub fn connectivity(&self) -> BTreeSet<Edge> {
        let mut set = self.edges.clone();
        if self.options.self_loops {
            set.extend((0..self.num_nodes()).map(|v| Edge::new(v, v)));
        }
        set
    }

    /// Same topology with replaced features.
    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        Self::from_edges(self.num_nodes(), self.edges.iter().copied(), features, self.options)
    }

    /// Deterministic JSON export with sorted keys.
    pub fn to_json(&self) -> Value {
        let features: Vec<Value> = self
            .features
            .iter_rows()
            .map(|r| Value::Array(r.iter().map(|v| json::float(*v).unwrap_or(Value::Null)).collect()))
            .collect();
        json!({
            "directed": self.options.directed,
            "self_loops": self.options.self_loops,
            "num_nodes": self.num_nodes(),
            "num_edges": self.num_edges(),
            "edges": self.edges.iter().map(|e| json!([e.src.0, e.dst.0])).collect::<Vec<_>>(),
            "features": features,
        })
    }
}

/// Builds the snapshot holding every edge with an event in
/// `[t_initial, t_end]` (inclusive on both ends).
pub fn build_snapshot(
    edges: &TemporalEdgeList,
    t_initial: i64,
    t_end: i64,
    features: Matrix,
    options: SnapshotOptions,
) -> Result<GraphSnapshot> {
    if t_initial > t_end {
        return Err(Error::InvalidWindow { t_initial, t_end });
    }
    let in_window = edges
        .edges
        .iter()
        .filter(|e| e.time >= t_initial && e.time <= t_end)
        .map(|e| Edge { src: e.src, dst: e.dst });
    GraphSnapshot::from_edges(edges.num_nodes(), in_window, features, options)
}

/// Two snapshots over the same node universe and the edges that changed.
#[derive(Debug, Clone)]
pub struct EvolutionPair {
    pub g0: Arc<GraphSnapshot>,
    pub g1: Arc<GraphSnapshot>,
    delta: BTreeMap<Edge, ChangeKind>,
}

impl EvolutionPair {
    pub fn delta_edges(&self) -> &BTreeMap<Edge, ChangeKind> {
        &self.delta
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.g0.num_nodes()
    }

    pub fn is_directed(&self) -> bool {
        self.g0.is_directed()
    }

    /// Change kind of the arc `from → to`, if it was altered.
    pub fn arc_change(&self, from: NodeId, to: NodeId) -> Option<ChangeKind> {
        let e = Edge { src: from, dst: to }.canonical(self.is_directed());
        self.delta.get(&e).copied()
    }

    /// Snapshot in which edges of the given kind exist.
    pub fn snapshot_for(&self, kind: ChangeKind) -> &GraphSnapshot {
        match kind {
            ChangeKind::Added => &self.g1,
            ChangeKind::Removed => &self.g0,
        }
    }

    /// The pair read backwards (`G1 → G0`): snapshots swapped, kinds flipped.
    pub fn reversed(&self) -> Self {
        Self {
            g0: Arc::clone(&self.g1),
            g1: Arc::clone(&self.g0),
            delta: self.delta.iter().map(|(e, k)| (*e, k.flipped())).collect(),
        }
    }

    /// `G0`'s connectivity with the delta applied; equals `G1`'s.
    pub fn apply_delta(&self) -> BTreeSet<Edge> {
        let mut set = self.g0.connectivity();
        for (e, kind) in &self.delta {
            match kind {
                ChangeKind::Added => set.insert(*e),
                ChangeKind::Removed => set.remove(e),
            };
        }
        set
    }
}

/// Computes the symmetric difference of the two snapshots' connectivity.
pub fn diff_snapshots(g0: Arc<GraphSnapshot>, g1: Arc<GraphSnapshot>) -> Result<EvolutionPair> {
    if g0.num_nodes() != g1.num_nodes() {
        return Err(Error::IncompatibleSnapshots(format!(
            "{} vs {} nodes",
            g0.num_nodes(),
            g1.num_nodes()
        )));
    }
    if g0.is_directed() != g1.is_directed() {
        return Err(Error::IncompatibleSnapshots("directedness differs".into()));
    }
    let e0 = g0.connectivity();
    let e1 = g1.connectivity();
    let mut delta = BTreeMap::new();
    for e in e1.difference(&e0) {
        delta.insert(*e, ChangeKind::Added);
    }
    for e in e0.difference(&e1) {
        delta.insert(*e, ChangeKind::Removed);
    }
    Ok(EvolutionPair { g0, g1, delta })
}

/// Identifier of an explanation target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetId {
    Node(NodeId),
    Link(NodeId, NodeId),
    Graph(usize),
}

impl TargetId {
    pub fn task(&self) -> Task {
        match self {
            TargetId::Node(_) => Task::Node,
            TargetId::Link(..) => Task::Link,
            TargetId::Graph(_) => Task::Graph,
        }
    }
}

impl fmt::Display for TargetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetId::Node(v) => write!(f, "{v}"),
            TargetId::Link(a, b) => write!(f, "{a}-{b}"),
            TargetId::Graph(g) => write!(f, "g{g}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub task: Task,
    pub labels: BTreeMap<TargetId, usize>,
}

impl LabelSet {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            labels: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, target: TargetId, class: usize) {
        self.labels.insert(target, class);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Checks every labeled target exists: node ids below `num_nodes`, graph
    /// ids below `num_graphs`, and classes below `num_classes`.
    pub fn validate(&self, num_nodes: usize, num_graphs: usize, num_classes: usize) -> Result<()> {
        for (target, class) in &self.labels {
            if target.task() != self.task {
                return Err(Error::Config(format!("label {target} does not match task {}", self.task)));
            }
            match *target {
                TargetId::Node(v) if v.0 >= num_nodes => return Err(Error::UnknownNode(v.0)),
                TargetId::Link(a, b) if a.0 >= num_nodes || b.0 >= num_nodes => {
                    return Err(Error::UnknownNode(a.0.max(b.0)))
                }
                TargetId::Graph(g) if g >= num_graphs => {
                    return Err(Error::Config(format!("graph {g} does not exist")))
                }
                _ => {}
            }
            if *class >= num_classes {
                return Err(Error::Config(format!("class {class} of {target} out of range")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tel(events: &[(usize, usize, i64)], n: usize) -> TemporalEdgeList {
        TemporalEdgeList {
            edges: events
                .iter()
                .map(|&(s, d, t)| TemporalEdge {
                    src: NodeId(s),
                    dst: NodeId(d),
                    time: t,
                })
                .collect(),
            id_map: IdMap::identity(n),
        }
    }

    fn snap(n: usize, edges: &[(usize, usize)]) -> Arc<GraphSnapshot> {
        Arc::new(
            GraphSnapshot::from_edges(
                n,
                edges.iter().map(|&(a, b)| Edge::new(a, b)),
                Matrix::zeros(n, 1),
                SnapshotOptions::default(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn window_filters_events() {
        let list = tel(&[(0, 1, 5), (1, 2, 6), (0, 1, 7)], 3);
        let g = build_snapshot(&list, 5, 6, Matrix::zeros(3, 1), SnapshotOptions::default()).unwrap();
        assert_eq!(g.num_edges(), 2);
        let empty = build_snapshot(&list, 8, 9, Matrix::zeros(3, 1), SnapshotOptions::default()).unwrap();
        assert_eq!(empty.num_edges(), 0);
        assert_eq!(empty.num_nodes(), 3);
        // isolated nodes still see themselves
        assert_eq!(empty.neighbors(NodeId(1)), &[NodeId(1)]);
    }

    #[test]
    fn window_covering_everything_counts_distinct_pairs() {
        let list = tel(&[(0, 1, 5), (1, 0, 6), (0, 1, 7), (2, 3, 1), (3, 1, 2)], 4);
        let g = build_snapshot(&list, 0, 100, Matrix::zeros(4, 1), SnapshotOptions::default()).unwrap();
        let oracle: BTreeSet<(usize, usize)> = list
            .edges
            .iter()
            .map(|e| (e.src.0.min(e.dst.0), e.src.0.max(e.dst.0)))
            .collect();
        assert_eq!(g.num_edges(), oracle.len());
    }

    #[test]
    fn bad_window_and_feature_mismatch() {
        let list = tel(&[(0, 1, 5)], 2);
        assert!(matches!(
            build_snapshot(&list, 6, 5, Matrix::zeros(2, 1), SnapshotOptions::default()),
            Err(Error::InvalidWindow { .. })
        ));
        assert!(matches!(
            build_snapshot(&list, 0, 9, Matrix::zeros(3, 1), SnapshotOptions::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn undirected_neighbors_are_mirrored() {
        let g = snap(3, &[(0, 1)]);
        assert!(g.has_arc(NodeId(0), NodeId(1)));
        assert!(g.has_arc(NodeId(1), NodeId(0)));
        assert!(!g.has_arc(NodeId(0), NodeId(2)));
        assert!(g.has_arc(NodeId(2), NodeId(2)));
    }

    #[test]
    fn directed_option_disables_mirroring() {
        let g = GraphSnapshot::from_edges(
            2,
            [Edge::new(0, 1)],
            Matrix::zeros(2, 1),
            SnapshotOptions {
                directed: true,
                self_loops: false,
            },
        )
        .unwrap();
        assert!(g.has_arc(NodeId(0), NodeId(1)));
        assert!(!g.has_arc(NodeId(1), NodeId(0)));
        assert!(g.neighbors(NodeId(0)).is_empty());
    }

    #[test]
    fn diff_identity_is_empty() {
        let g = snap(3, &[(0, 1), (1, 2)]);
        let pair = diff_snapshots(g.clone(), g).unwrap();
        assert!(pair.is_empty());
    }

    #[test]
    fn diff_four_node_toy_single_addition() {
        // I=0, J=1, K=2, L=3
        let g0 = snap(4, &[(0, 1), (2, 3)]);
        let g1 = snap(4, &[(0, 1), (2, 3), (1, 2)]);
        let pair = diff_snapshots(g0, g1).unwrap();
        let expected: BTreeMap<Edge, ChangeKind> = [(Edge::new(1, 2), ChangeKind::Added)].into();
        assert_eq!(pair.delta_edges(), &expected);
        assert_eq!(pair.arc_change(NodeId(2), NodeId(1)), Some(ChangeKind::Added));
    }

    #[test]
    fn diff_tags_added_and_removed() {
        let pair = diff_snapshots(snap(3, &[(0, 1)]), snap(3, &[(1, 2)])).unwrap();
        let expected: BTreeMap<Edge, ChangeKind> =
            [(Edge::new(0, 1), ChangeKind::Removed), (Edge::new(1, 2), ChangeKind::Added)].into();
        assert_eq!(pair.delta_edges(), &expected);
        assert_eq!(pair.apply_delta(), pair.g1.connectivity());
        let rev = pair.reversed();
        assert_eq!(rev.arc_change(NodeId(0), NodeId(1)), Some(ChangeKind::Added));
    }

    #[test]
    fn diff_rejects_different_universes() {
        assert!(matches!(
            diff_snapshots(snap(3, &[]), snap(4, &[])),
            Err(Error::IncompatibleSnapshots(_))
        ));
    }

    #[test]
    fn labels_must_reference_existing_targets() {
        let mut labels = LabelSet::new(Task::Node);
        labels.insert(TargetId::Node(NodeId(1)), 0);
        assert!(labels.validate(2, 0, 2).is_ok());
        labels.insert(TargetId::Node(NodeId(5)), 1);
        assert!(labels.validate(2, 0, 2).is_err());
    }
}
