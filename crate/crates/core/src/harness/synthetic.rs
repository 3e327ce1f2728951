//! Seeded evolving-graph generators used by the evaluation suites.
//!
//! Node and link suites draw a stochastic block model snapshot `G0` and
//! churn a fraction of its edges to obtain `G1`. Graph suites draw a
//! collection of small molecule-like graphs (a ring backbone with chords)
//! and apply a handful of random edits to each.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{train, train_graphs, TrainConfig, TrainOutcome};
use crate::graph::{diff_snapshots, Edge, EvolutionPair, GraphSnapshot, LabelSet, NodeId, SnapshotOptions, TargetId, Task};
use crate::linalg::Matrix;

/// Which edge operations turn `G0` into `G1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evolution {
    Add,
    Remove,
    Mixed,
}

impl Evolution {
    pub const ALL: [Evolution; 3] = [Evolution::Add, Evolution::Remove, Evolution::Mixed];

    pub fn as_str(self) -> &'static str {
        match self {
            Evolution::Add => "add",
            Evolution::Remove => "remove",
            Evolution::Mixed => "mixed",
        }
    }
}

impl fmt::Display for Evolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Evolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" => Ok(Evolution::Add),
            "remove" => Ok(Evolution::Remove),
            "mixed" => Ok(Evolution::Mixed),
            other => Err(Error::Config(format!("unknown evolution `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub task: Task,
    pub evolution: Evolution,
    /// Node count of the block-model snapshot (node and link tasks).
    pub num_nodes: usize,
    /// Blocks double as node classes.
    pub num_blocks: usize,
    pub feature_dim: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Fraction of `|E0|` edited between the snapshots.
    pub churn: f64,
    /// Graph task: number of graphs and nodes per graph.
    pub num_graphs: usize,
    pub graph_size: usize,
    /// Graph task: edge edits per graph.
    pub graph_edits: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            task: Task::Node,
            evolution: Evolution::Mixed,
            num_nodes: 120,
            num_blocks: 3,
            feature_dim: 8,
            p_in: 0.12,
            p_out: 0.015,
            churn: 0.15,
            num_graphs: 60,
            graph_size: 16,
            graph_edits: 5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.p_in) || !prob(self.p_out) || !prob(self.churn) {
            return Err(Error::Config("p_in, p_out and churn must lie in [0, 1]".into()));
        }
        if self.num_blocks < 2 || self.feature_dim < self.num_blocks {
            return Err(Error::Config("need at least 2 blocks and feature_dim >= num_blocks".into()));
        }
        if self.num_nodes < self.num_blocks {
            return Err(Error::Config("fewer nodes than blocks".into()));
        }
        if self.task == Task::Graph && (self.graph_size < 4 || self.num_graphs < 2) {
            return Err(Error::Config("graph suites need >= 2 graphs of >= 4 nodes".into()));
        }
        Ok(())
    }
}

/// Snapshot pairs plus the labeled training view of `G0`.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub task: Task,
    pub evolution: Evolution,
    /// One pair for node / link suites, one per graph for graph suites.
    pub pairs: Vec<EvolutionPair>,
    pub labels: LabelSet,
    pub num_classes: usize,
}

impl SyntheticData {
    /// The `G0` snapshots the network is trained on.
    pub fn training_graphs(&self) -> Vec<GraphSnapshot> {
        self.pairs.iter().map(|p| (*p.g0).clone()).collect()
    }

    pub fn train(&self, cfg: &TrainConfig) -> Result<TrainOutcome> {
        let cfg = TrainConfig {
            num_classes: self.num_classes,
            ..cfg.clone()
        };
        match self.task {
            Task::Graph => train_graphs(&self.training_graphs(), &self.labels, &cfg),
            _ => train(&self.pairs[0].g0, &self.labels, &cfg),
        }
    }
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match cfg.task {
        Task::Node | Task::Link => block_model(cfg, &mut rng),
        Task::Graph => molecules(cfg, &mut rng),
    }
}

fn options() -> SnapshotOptions {
    SnapshotOptions {
        directed: false,
        self_loops: true,
    }
}

fn pair_of(n: usize, e0: &BTreeSet<Edge>, e1: &BTreeSet<Edge>, features: Matrix) -> Result<EvolutionPair> {
    let g0 = GraphSnapshot::from_edges(n, e0.iter().copied(), features.clone(), options())?;
    let g1 = GraphSnapshot::from_edges(n, e1.iter().copied(), features, options())?;
    diff_snapshots(Arc::new(g0), Arc::new(g1))
}

/// Applies `count` random edits of the requested kind; mixed splits them
/// evenly between additions and removals.
fn churn(edges: &BTreeSet<Edge>, n: usize, count: usize, evolution: Evolution, rng: &mut ChaCha8Rng) -> BTreeSet<Edge> {
    let (adds, removes) = match evolution {
        Evolution::Add => (count, 0),
        Evolution::Remove => (0, count),
        Evolution::Mixed => (count - count / 2, count / 2),
    };
    let mut out = edges.clone();
    let mut existing: Vec<Edge> = edges.iter().copied().collect();
    existing.shuffle(rng);
    for e in existing.into_iter().take(removes) {
        out.remove(&e);
    }
    let capacity = n * (n - 1) / 2;
    let mut added = 0;
    while added < adds && out.len() < capacity {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let e = Edge::new(a, b).canonical(false);
        if !edges.contains(&e) && out.insert(e) {
            added += 1;
        }
    }
    out
}

fn block_model(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Result<SyntheticData> {
    let n = cfg.num_nodes;
    let block: Vec<usize> = (0..n).map(|v| v * cfg.num_blocks / n).collect();
    let mut features = Matrix::zeros(n, cfg.feature_dim);
    for v in 0..n {
        for (k, x) in features.row_mut(v).iter_mut().enumerate() {
            *x = rng.gen_range(-1.0..1.0) + if k == block[v] { 0.6 } else { 0.0 };
        }
    }
    let mut e0 = BTreeSet::new();
    for a in 0..n {
        for b in a + 1..n {
            let p = if block[a] == block[b] { cfg.p_in } else { cfg.p_out };
            if rng.gen_bool(p) {
                e0.insert(Edge::new(a, b));
            }
        }
    }
    let count = ((e0.len() as f64) * cfg.churn).round() as usize;
    let e1 = churn(&e0, n, count, cfg.evolution, rng);

    let (labels, num_classes) = match cfg.task {
        Task::Node => {
            let mut labels = LabelSet::new(Task::Node);
            for (v, b) in block.iter().enumerate() {
                labels.insert(TargetId::Node(NodeId(v)), *b);
            }
            (labels, cfg.num_blocks)
        }
        _ => {
            let mut labels = LabelSet::new(Task::Link);
            for e in &e0 {
                labels.insert(TargetId::Link(e.src, e.dst), 1);
            }
            let mut negatives = 0;
            while negatives < e0.len() && negatives + e0.len() < n * (n - 1) / 2 {
                let a = rng.gen_range(0..n);
                let b = rng.gen_range(0..n);
                let e = Edge::new(a, b).canonical(false);
                if a != b && !e0.contains(&e) && !labels.labels.contains_key(&TargetId::Link(e.src, e.dst)) {
                    labels.insert(TargetId::Link(e.src, e.dst), 0);
                    negatives += 1;
                }
            }
            (labels, 2)
        }
    };
    Ok(SyntheticData {
        task: cfg.task,
        evolution: cfg.evolution,
        pairs: vec![pair_of(n, &e0, &e1, features)?],
        labels,
        num_classes,
    })
}

/// Ring backbone plus random chords over `num_blocks` atom types. Class 1
/// graphs carry a planted triangle of type-0 atoms.
fn molecules(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Result<SyntheticData> {
    let n = cfg.graph_size;
    let mut pairs = Vec::with_capacity(cfg.num_graphs);
    let mut labels = LabelSet::new(Task::Graph);
    for g in 0..cfg.num_graphs {
        let class = g % 2;
        let mut atoms: Vec<usize> = (0..n).map(|_| rng.gen_range(1..cfg.num_blocks)).collect();
        let mut edges: BTreeSet<Edge> = (0..n).map(|v| Edge::new(v, (v + 1) % n).canonical(false)).collect();
        for _ in 0..n / 4 {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b {
                edges.insert(Edge::new(a, b).canonical(false));
            }
        }
        let start = rng.gen_range(0..n);
        let motif = [start, (start + 1) % n, (start + 2) % n];
        for &v in &motif {
            atoms[v] = 0;
        }
        if class == 1 {
            edges.insert(Edge::new(motif[0], motif[2]).canonical(false));
        }
        let mut features = Matrix::zeros(n, cfg.feature_dim);
        for (v, &a) in atoms.iter().enumerate() {
            for (k, x) in features.row_mut(v).iter_mut().enumerate() {
                *x = if k == a { 1.0 } else { 0.1 * rng.gen_range(-1.0..1.0) };
            }
        }
        let e1 = churn(&edges, n, cfg.graph_edits, cfg.evolution, rng);
        pairs.push(pair_of(n, &edges, &e1, features)?);
        labels.insert(TargetId::Graph(g), class);
    }
    Ok(SyntheticData {
        task: Task::Graph,
        evolution: cfg.evolution,
        pairs,
        labels,
        num_classes: 2,
    })
}
