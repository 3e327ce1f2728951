//! Altered computation paths: depth-`T` walks ending at a root that traverse
//! at least one changed arc.
//!
//! A path `[p0, …, pT]` carries messages from `p0` (the leaf) up to `pT` (the
//! root); step `τ` is the arc `p[τ-1] → p[τ]`. Added-kind paths are walks of
//! `G1` through at least one added arc, removed-kind paths are walks of `G0`
//! through at least one removed arc. A walk mixing both kinds is a walk of
//! neither snapshot and is never produced.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path as FsPath;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{ChangeKind, EvolutionPair, GraphSnapshot, NodeId};

pub const DEFAULT_MAX_PATHS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Path {
    /// Leaf to root, `T + 1` entries.
    pub nodes: Vec<NodeId>,
    pub kind: ChangeKind,
    /// Highest layer whose step arc is altered, in `[1, T]`.
    pub t_bar: usize,
}

impl Path {
    pub fn depth(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn root(&self) -> NodeId {
        *self.nodes.last().unwrap()
    }

    pub fn leaf(&self) -> NodeId {
        self.nodes[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlteredPathSet {
    pub root: NodeId,
    pub depth: usize,
    pub paths: Vec<Path>,
}

impl AlteredPathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// One line per path: `kind t_bar n0,n1,…,nT`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for p in &self.paths {
            let nodes: Vec<String> = p.nodes.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(out, "{} {} {}", p.kind.as_str(), p.t_bar, nodes.join(","));
        }
        out
    }

    pub fn write_dump(&self, path: &FsPath) -> Result<()> {
        std::fs::write(path, self.dump())?;
        Ok(())
    }
}

/// Kind and `t̄` of a walk, or `None` when it is not an altered path of
/// either snapshot.
pub fn classify_walk(pair: &EvolutionPair, nodes: &[NodeId]) -> Option<(ChangeKind, usize)> {
    if nodes.len() < 2 {
        return None;
    }
    [ChangeKind::Added, ChangeKind::Removed].into_iter().find_map(|kind| {
        let g = pair.snapshot_for(kind);
        let mut t_bar = None;
        for tau in 1..nodes.len() {
            let (from, to) = (nodes[tau - 1], nodes[tau]);
            if !g.has_arc(from, to) {
                return None;
            }
            if pair.arc_change(from, to) == Some(kind) {
                t_bar = Some(tau);
            }
        }
        t_bar.map(|t| (kind, t))
    })
}

/// Fewest steps from below `v` to an altered arc of `kind`: 1 when one of
/// `v`'s incoming arcs is altered, `usize::MAX` when none is reachable.
fn altered_distance(pair: &EvolutionPair, g: &GraphSnapshot, kind: ChangeKind) -> Vec<usize> {
    let n = g.num_nodes();
    let mut out_arcs: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for v in 0..n {
        for &u in g.neighbors(NodeId(v)) {
            out_arcs[u.0].push(NodeId(v));
            if dist[v] != 1 && pair.arc_change(u, NodeId(v)) == Some(kind) {
                dist[v] = 1;
                queue.push_back(v);
            }
        }
    }
    while let Some(u) = queue.pop_front() {
        for &v in &out_arcs[u] {
            if dist[v.0] == usize::MAX {
                dist[v.0] = dist[u] + 1;
                queue.push_back(v.0);
            }
        }
    }
    dist
}

struct Walker<'a> {
    pair: &'a EvolutionPair,
    graph: &'a GraphSnapshot,
    kind: ChangeKind,
    dist: Vec<usize>,
    buf: Vec<NodeId>,
    out: Vec<Path>,
    limit: usize,
}

impl Walker<'_> {
    /// Fills `buf[t-1]` given `buf[t..=T]`; `t_bar` is the highest altered
    /// step in the suffix so far.
    fn descend(&mut self, t: usize, t_bar: Option<usize>) -> Result<()> {
        if t == 0 {
            if let Some(t_bar) = t_bar {
                if self.out.len() >= self.limit {
                    return Err(Error::CapacityExceeded { limit: self.limit });
                }
                self.out.push(Path {
                    nodes: self.buf.clone(),
                    kind: self.kind,
                    t_bar,
                });
            }
            return Ok(());
        }
        let v = self.buf[t];
        for &u in self.graph.neighbors(v) {
            let step_altered = t_bar.is_none() && self.pair.arc_change(u, v) == Some(self.kind);
            let next = if step_altered { Some(t) } else { t_bar };
            if next.is_none() && self.dist[u.0] > t - 1 {
                continue;
            }
            self.buf[t - 1] = u;
            self.descend(t - 1, next)?;
        }
        Ok(())
    }
}

/// Every altered path of depth `depth` ending at `root`, sorted by node
/// sequence then kind. Fails once more than `max_paths` paths exist.
pub fn enumerate_altered_paths(
    pair: &EvolutionPair,
    root: NodeId,
    depth: usize,
    max_paths: usize,
) -> Result<AlteredPathSet> {
    if root.0 >= pair.num_nodes() {
        return Err(Error::UnknownNode(root.0));
    }
    if depth == 0 {
        return Err(Error::Config("path depth must be at least 1".into()));
    }
    let mut paths = Vec::new();
    for kind in [ChangeKind::Added, ChangeKind::Removed] {
        let graph = pair.snapshot_for(kind);
        let mut walker = Walker {
            pair,
            graph,
            kind,
            dist: altered_distance(pair, graph, kind),
            buf: vec![root; depth + 1],
            out: paths,
            limit: max_paths,
        };
        walker.descend(depth, None)?;
        paths = walker.out;
    }
    paths.sort_unstable_by(|a, b| a.nodes.cmp(&b.nodes).then(a.kind.cmp(&b.kind)));
    Ok(AlteredPathSet { root, depth, paths })
}

/// Path sets for several roots laid out back to back: a link target's two
/// endpoints, or every node of a graph-level target.
#[derive(Debug, Clone, PartialEq)]
pub struct RootedPaths {
    pub sets: Vec<AlteredPathSet>,
    offsets: Vec<usize>,
}

impl RootedPaths {
    pub fn new(sets: Vec<AlteredPathSet>) -> Self {
        let mut offsets = Vec::with_capacity(sets.len() + 1);
        let mut total = 0;
        offsets.push(0);
        for s in &sets {
            total += s.len();
            offsets.push(total);
        }
        Self { sets, offsets }
    }

    /// Total path count `m` across roots.
    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Global index of the first path of root `r`.
    pub fn offset(&self, r: usize) -> usize {
        self.offsets[r]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Path)> {
        self.sets.iter().enumerate().flat_map(|(r, s)| s.paths.iter().map(move |p| (r, p)))
    }

    pub fn get(&self, index: usize) -> &Path {
        let r = self.offsets.partition_point(|&o| o <= index) - 1;
        &self.sets[r].paths[index - self.offsets[r]]
    }
}

/// Enumerates every root in parallel; `max_paths` bounds the total.
pub fn enumerate_roots(pair: &EvolutionPair, roots: &[NodeId], depth: usize, max_paths: usize) -> Result<RootedPaths> {
    let sets = roots
        .par_iter()
        .map(|&r| enumerate_altered_paths(pair, r, depth, max_paths))
        .collect::<Result<Vec<_>>>()?;
    let out = RootedPaths::new(sets);
    if out.len() > max_paths {
        return Err(Error::CapacityExceeded { limit: max_paths });
    }
    Ok(out)
}

/// Key of a shared multiplier chain: kind plus the suffix `p[t..=T]`.
pub type SuffixKey = (ChangeKind, Vec<NodeId>);

/// Paths grouped by their suffix at every layer `t ∈ [1, T]`. Paths sharing a
/// suffix share the multiplier product above layer `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffixIndex {
    layers: Vec<BTreeMap<SuffixKey, Vec<usize>>>,
}

impl SuffixIndex {
    pub fn groups(&self, t: usize) -> &BTreeMap<SuffixKey, Vec<usize>> {
        &self.layers[t - 1]
    }

    pub fn num_groups(&self, t: usize) -> usize {
        self.layers[t - 1].len()
    }
}

pub fn group_by_suffix(set: &AlteredPathSet) -> SuffixIndex {
    let mut layers = vec![BTreeMap::new(); set.depth];
    for (i, p) in set.paths.iter().enumerate() {
        for t in 1..=set.depth {
            layers[t - 1]
                .entry((p.kind, p.nodes[t..].to_vec()))
                .or_insert_with(Vec::new)
                .push(i);
        }
    }
    SuffixIndex { layers }
}
