//! Sum-aggregation message-passing network.
//!
//! Layer `t` computes `z_v = Σ_{u ∈ N(v)} h_u θ^(t)` over in-neighbors
//! (self-loops included when the snapshot has them), then `h_v = ReLU(z_v)`
//! for every layer but the last, whose logits are returned raw. There are no
//! biases: a node's logits are a sum of messages, which is what lets the
//! attribution split logit changes exactly over computation paths.

mod persist;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{GraphSnapshot, NodeId, TargetId, Task};
use crate::linalg::Matrix;
use crate::numeric::{sigmoid, softmax};

pub use persist::{load_weights, save_weights, weights_from_json, weights_to_json};
pub use train::{train, train_graphs, TrainConfig, TrainOutcome};

/// Task head sitting on top of the node logits.
#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    None,
    /// `θ_LP` of length `2c`: `s = [z_I; z_J] · θ_LP`.
    Link(Vec<f64>),
    /// `θ_GC` of shape `c × c` applied to mean-pooled node logits.
    Graph(Matrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnWeights {
    /// `[d_0, d_1, …, d_T]`; `d_T` is the node-logit width `c`.
    pub dims: Vec<usize>,
    /// `layers[t - 1]` is `θ^(t)`, shaped `d_{t-1} × d_t`.
    pub layers: Vec<Matrix>,
    pub head: Head,
    pub seed: u64,
    pub task: Task,
}

impl GnnWeights {
    /// Uniform `[-1/√d_in, 1/√d_in]` initialization from a seeded RNG.
    pub fn init(task: Task, dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer dims {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |rows: usize, cols: usize| {
            let bound = 1.0 / (rows as f64).sqrt();
            let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
            Matrix::from_vec(rows, cols, data)
        };
        let layers: Vec<Matrix> = dims.windows(2).map(|w| uniform(w[0], w[1])).collect();
        let c = *dims.last().unwrap();
        let head = match task {
            Task::Node => Head::None,
            Task::Link => Head::Link(uniform(2 * c, 1).as_slice().to_vec()),
            Task::Graph => Head::Graph(uniform(c, c)),
        };
        Ok(Self {
            dims: dims.to_vec(),
            layers,
            head,
            seed,
            task,
        })
    }

    /// Number of message-passing layers `T`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    /// Node-logit width `c`.
    pub fn out_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn layer(&self, t: usize) -> &Matrix {
        &self.layers[t - 1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() != self.layers.len() + 1 || self.layers.is_empty() {
            return Err(Error::Weights(format!(
                "{} dims for {} layers",
                self.dims.len(),
                self.layers.len()
            )));
        }
        for (t, layer) in self.layers.iter().enumerate() {
            if layer.rows() != self.dims[t] || layer.cols() != self.dims[t + 1] {
                return Err(Error::Weights(format!(
                    "layer {} is {}x{}, expected {}x{}",
                    t + 1,
                    layer.rows(),
                    layer.cols(),
                    self.dims[t],
                    self.dims[t + 1]
                )));
            }
            if !layer.is_finite() {
                return Err(Error::Weights(format!("layer {} has non-finite entries", t + 1)));
            }
        }
        let c = self.out_dim();
        match (&self.head, self.task) {
            (Head::None, Task::Node) => {}
            (Head::Link(v), Task::Link) if v.len() == 2 * c && v.iter().all(|x| x.is_finite()) => {}
            (Head::Graph(m), Task::Graph) if m.rows() == c && m.cols() == c && m.is_finite() => {}
            _ => return Err(Error::Weights(format!("head does not fit task {}", self.task))),
        }
        Ok(())
    }
}

/// Cached forward pass: pre-activations `z^(t)` for `t ∈ [1, T]` and
/// activations `h^(t)` for `t ∈ [0, T)`, `h^(0)` being the features.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivations {
    acts: Vec<Matrix>,
    logits: Vec<Matrix>,
}

impl LayerActivations {
    pub fn depth(&self) -> usize {
        self.logits.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.acts[0].rows()
    }

    /// `h^(t)_v` for `t < T`.
    pub fn h(&self, t: usize, v: NodeId) -> &[f64] {
        self.acts[t].row(v.0)
    }

    /// `z^(t)_v` for `1 ≤ t ≤ T`.
    pub fn z(&self, t: usize, v: NodeId) -> &[f64] {
        self.logits[t - 1].row(v.0)
    }

    /// Output logits `z^(T)_v`.
    pub fn output(&self, v: NodeId) -> &[f64] {
        self.logits.last().unwrap().row(v.0)
    }

    pub fn output_matrix(&self) -> &Matrix {
        self.logits.last().unwrap()
    }
}

pub fn forward(g: &GraphSnapshot, w: &GnnWeights) -> Result<LayerActivations> {
    forward_impl(g, w, None)
}

/// Forward pass where arc `u → v` carries a continuous coefficient
/// `coeff(u, v)` instead of 1. Used to differentiate logits with respect to
/// edge presence.
pub fn forward_weighted(
    g: &GraphSnapshot,
    w: &GnnWeights,
    coeff: &dyn Fn(NodeId, NodeId) -> f64,
) -> Result<LayerActivations> {
    forward_impl(g, w, Some(coeff))
}

/// Sums in-neighbor rows: `out_v = Σ_{u ∈ N(v)} coeff(u, v) · input_u`.
pub(crate) fn aggregate(g: &GraphSnapshot, input: &Matrix, coeff: Option<&dyn Fn(NodeId, NodeId) -> f64>) -> Matrix {
    let mut out = Matrix::zeros(input.rows(), input.cols());
    for v in 0..g.num_nodes() {
        let v_id = NodeId(v);
        let row = out.row_mut(v);
        for &u in g.neighbors(v_id) {
            let a = coeff.map_or(1.0, |f| f(u, v_id));
            for (o, x) in row.iter_mut().zip(input.row(u.0)) {
                *o += a * x;
            }
        }
    }
    out
}

fn relu_matrix(z: &Matrix) -> Matrix {
    let data = z.as_slice().iter().map(|v| v.max(0.0)).collect();
    Matrix::from_vec(z.rows(), z.cols(), data)
}

fn forward_impl(
    g: &GraphSnapshot,
    w: &GnnWeights,
    coeff: Option<&dyn Fn(NodeId, NodeId) -> f64>,
) -> Result<LayerActivations> {
    if g.features().cols() != w.input_dim() {
        return Err(Error::dim(format!(
            "features have width {} but the network expects {}",
            g.features().cols(),
            w.input_dim()
        )));
    }
    let depth = w.depth();
    let mut acts = vec![g.features().clone()];
    let mut logits = Vec::with_capacity(depth);
    for t in 1..=depth {
        let z = aggregate(g, &acts[t - 1], coeff).matmul(w.layer(t));
        if t < depth {
            acts.push(relu_matrix(&z));
        }
        logits.push(z);
    }
    Ok(LayerActivations { acts, logits })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    pub probs: Vec<f64>,
}

impl ClassDistribution {
    pub fn from_logits(logits: &[f64]) -> Self {
        Self { probs: softmax(logits) }
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn predicted_class(&self) -> usize {
        crate::numeric::argmax(&self.probs)
    }
}

fn check_node(acts: &LayerActivations, v: NodeId) -> Result<()> {
    if v.0 < acts.num_nodes() {
        Ok(())
    } else {
        Err(Error::UnknownNode(v.0))
    }
}

/// `softmax(z_J)`. For two classes this equals `[1 − σ(z₁ − z₀), σ(z₁ − z₀)]`.
pub fn predict_node(acts: &LayerActivations, node: NodeId) -> Result<ClassDistribution> {
    check_node(acts, node)?;
    Ok(ClassDistribution::from_logits(acts.output(node)))
}

fn link_head(w: &GnnWeights) -> Result<&[f64]> {
    match &w.head {
        Head::Link(theta) => Ok(theta),
        _ => Err(Error::Config("link prediction needs a link head".into())),
    }
}

fn graph_head(w: &GnnWeights) -> Result<&Matrix> {
    match &w.head {
        Head::Graph(theta) => Ok(theta),
        _ => Err(Error::Config("graph classification needs a graph head".into())),
    }
}

/// Link score `s = [z_I; z_J] · θ_LP`.
pub fn link_score(acts: &LayerActivations, i: NodeId, j: NodeId, w: &GnnWeights) -> Result<f64> {
    check_node(acts, i)?;
    check_node(acts, j)?;
    let theta = link_head(w)?;
    let c = w.out_dim();
    let zi = acts.output(i);
    let zj = acts.output(j);
    Ok(zi.iter().zip(&theta[..c]).map(|(a, b)| a * b).sum::<f64>()
        + zj.iter().zip(&theta[c..]).map(|(a, b)| a * b).sum::<f64>())
}

/// `[1 − p, p]` with `p = σ(s)` the probability that the link exists.
pub fn predict_link(acts: &LayerActivations, i: NodeId, j: NodeId, w: &GnnWeights) -> Result<ClassDistribution> {
    let p = sigmoid(link_score(acts, i, j, w)?);
    Ok(ClassDistribution { probs: vec![1.0 - p, p] })
}

/// Mean-pooled node logits mapped through `θ_GC`.
pub fn graph_logits(acts: &LayerActivations, w: &GnnWeights) -> Result<Vec<f64>> {
    let theta = graph_head(w)?;
    let n = acts.num_nodes();
    if n == 0 {
        return Err(Error::Empty("graph has no nodes"));
    }
    let mut mean = acts.output_matrix().column_sums();
    mean.iter_mut().for_each(|v| *v /= n as f64);
    Ok(theta.left_mul(&mean))
}

pub fn predict_graph(acts: &LayerActivations, w: &GnnWeights) -> Result<ClassDistribution> {
    Ok(ClassDistribution::from_logits(&graph_logits(acts, w)?))
}

/// Linear map from root node logits to task-head logits:
/// `u = Σ_r z_{root_r} · M_r`. Node heads are the identity, link heads emit
/// `[0, s]` so their softmax is `[1 − σ(s), σ(s)]`, graph heads average
/// every node through `θ_GC / |V|`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadMap {
    pub roots: Vec<(NodeId, Matrix)>,
    pub width: usize,
}

impl HeadMap {
    pub fn for_target(target: TargetId, w: &GnnWeights, num_nodes: usize) -> Result<Self> {
        let c = w.out_dim();
        match target {
            TargetId::Node(v) => {
                if v.0 >= num_nodes {
                    return Err(Error::UnknownNode(v.0));
                }
                Ok(Self {
                    roots: vec![(v, Matrix::identity(c))],
                    width: c,
                })
            }
            TargetId::Link(i, j) => {
                if i.0 >= num_nodes || j.0 >= num_nodes {
                    return Err(Error::UnknownNode(i.0.max(j.0)));
                }
                let theta = link_head(w)?;
                let block = |part: &[f64]| {
                    let mut m = Matrix::zeros(c, 2);
                    for (k, v) in part.iter().enumerate() {
                        m[(k, 1)] = *v;
                    }
                    m
                };
                Ok(Self {
                    roots: vec![(i, block(&theta[..c])), (j, block(&theta[c..]))],
                    width: 2,
                })
            }
            TargetId::Graph(_) => {
                if num_nodes == 0 {
                    return Err(Error::Empty("graph has no nodes"));
                }
                let mut scaled = graph_head(w)?.clone();
                scaled.scale(1.0 / num_nodes as f64);
                Ok(Self {
                    roots: (0..num_nodes).map(|v| (NodeId(v), scaled.clone())).collect(),
                    width: c,
                })
            }
        }
    }

    pub fn apply(&self, acts: &LayerActivations) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        for (root, m) in &self.roots {
            for (o, v) in out.iter_mut().zip(m.left_mul(acts.output(*root))) {
                *o += v;
            }
        }
        out
    }
}
