//! Materializes the configured dataset into snapshot pairs and labels.

use std::sync::Arc;

use evoxplain::gnn::{train, train_graphs, TrainConfig, TrainOutcome};
use evoxplain::graph::{
    build_snapshot, diff_snapshots, load_features, load_labels, load_temporal_edges, EdgeFormat, IdMap, LabelSet,
    NodeId, SnapshotOptions, TargetId,
};
use evoxplain::harness::generate;
use evoxplain::{EvolutionPair, GraphSnapshot, Task};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub task: Task,
    /// Every materialized snapshot, in window order.
    pub snapshots: Vec<Arc<GraphSnapshot>>,
    pub pairs: Vec<EvolutionPair>,
    /// Graphs the network trains on.
    pub training: Vec<GraphSnapshot>,
    pub labels: LabelSet,
    pub id_map: IdMap,
    pub num_classes: usize,
}

impl Dataset {
    pub fn load(cfg: &RunConfig) -> Result<Self, CliError> {
        if let Some(s) = &cfg.synthetic {
            let data = generate(&s.resolve(cfg.task, cfg.seed))?;
            let snapshots = match cfg.task {
                Task::Graph => Vec::new(),
                _ => vec![data.pairs[0].g0.clone(), data.pairs[0].g1.clone()],
            };
            let n = data.pairs[0].num_nodes();
            return Ok(Self {
                task: cfg.task,
                training: data.training_graphs(),
                snapshots,
                pairs: data.pairs,
                labels: data.labels,
                id_map: IdMap::identity(n),
                num_classes: data.num_classes,
            });
        }
        let f = cfg
            .files
            .as_ref()
            .ok_or_else(|| CliError::config("no dataset configured"))?;
        let features = load_features(&f.features)?;
        let format = EdgeFormat {
            allow_self_loops: false,
            universe: Some(features.rows()),
        };
        let edges = load_temporal_edges(&f.edges, &format)?;
        let options = SnapshotOptions {
            directed: f.directed,
            self_loops: f.self_loops,
        };
        let snapshots = f
            .windows
            .iter()
            .map(|w| build_snapshot(&edges, w[0], w[1], features.clone(), options).map(Arc::new))
            .collect::<evoxplain::Result<Vec<_>>>()?;
        let pairs = snapshots
            .windows(2)
            .map(|w| diff_snapshots(w[0].clone(), w[1].clone()))
            .collect::<evoxplain::Result<Vec<_>>>()?;
        let labels = load_labels(&f.labels, cfg.task, &edges.id_map)?;
        let training = match cfg.task {
            Task::Graph => snapshots.iter().map(|g| (**g).clone()).collect(),
            _ => vec![(*snapshots[0]).clone()],
        };
        Ok(Self {
            task: cfg.task,
            snapshots,
            pairs,
            training,
            labels,
            id_map: edges.id_map,
            num_classes: if cfg.task == Task::Link { 2 } else { cfg.gnn.num_classes },
        })
    }

    pub fn train(&self, cfg: &TrainConfig) -> Result<TrainOutcome, CliError> {
        let cfg = TrainConfig {
            num_classes: self.num_classes,
            ..cfg.clone()
        };
        let out = match self.task {
            Task::Graph => train_graphs(&self.training, &self.labels, &cfg)?,
            _ => train(&self.training[0], &self.labels, &cfg)?,
        };
        Ok(out)
    }

    fn node(&self, raw: &str) -> Result<NodeId, CliError> {
        let id: u64 = raw
            .parse()
            .map_err(|_| CliError::target(format!("bad node id `{raw}`")))?;
        self.id_map
            .dense(id)
            .ok_or_else(|| CliError::target(format!("node {id} does not exist")))
    }

    /// Parses `v`, `a-b` or `gK` (per task) using raw node ids. Returns the
    /// target and the index of the pair it lives in; graph targets name
    /// their pair.
    pub fn parse_target(&self, text: &str, pair: usize) -> Result<(TargetId, usize), CliError> {
        match self.task {
            Task::Node => Ok((TargetId::Node(self.node(text)?), pair)),
            Task::Link => {
                let (a, b) = text
                    .split_once('-')
                    .ok_or_else(|| CliError::target(format!("link target `{text}` is not of the form a-b")))?;
                let (a, b) = (self.node(a)?, self.node(b)?);
                Ok((TargetId::Link(a.min(b), a.max(b)), pair))
            }
            Task::Graph => {
                let g: usize = text
                    .trim_start_matches('g')
                    .parse()
                    .map_err(|_| CliError::target(format!("bad graph id `{text}`")))?;
                if g >= self.pairs.len() {
                    return Err(CliError::target(format!("graph {g} does not exist")));
                }
                Ok((TargetId::Graph(g), g))
            }
        }
    }

    pub fn raw(&self, v: NodeId) -> u64 {
        self.id_map.raw(v)
    }
}
