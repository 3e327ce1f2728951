//! Full-batch trainer with manual backpropagation, Adam updates and
//! inverted dropout on every layer input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{aggregate, forward, graph_logits, link_score, GnnWeights, Head};
use crate::error::{Error, Result};
use crate::graph::{GraphSnapshot, LabelSet, NodeId, TargetId, Task};
use crate::linalg::Matrix;
use crate::numeric::{argmax, log_softmax, sigmoid, softmax};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub dropout: f64,
    pub hidden: usize,
    /// Number of message-passing layers `T`.
    pub layers: usize,
    pub num_classes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.01,
            dropout: 0.2,
            hidden: 16,
            layers: 2,
            num_classes: 2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.layers) {
            return Err(Error::Config(format!("layers must be in [1, 3], got {}", self.layers)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::Config(format!("invalid learning rate {}", self.lr)));
        }
        if self.hidden == 0 || self.num_classes < 2 {
            return Err(Error::Config("hidden size and class count must be positive".into()));
        }
        Ok(())
    }

    fn dims(&self, input: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(self.hidden, self.layers - 1));
        dims.push(self.num_classes);
        dims
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: GnnWeights,
    /// Dropout-free loss at the start of every epoch.
    pub loss_history: Vec<f64>,
    /// Dropout-free accuracy on the labeled targets after training.
    pub accuracy: f64,
}

/// Trains a node-classification or link-prediction network on one snapshot.
pub fn train(g: &GraphSnapshot, labels: &LabelSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if labels.task == Task::Graph {
        return Err(Error::Config("graph classification trains on a graph collection".into()));
    }
    train_graphs(std::slice::from_ref(g), labels, cfg)
}

/// Trains on a collection of graphs. Node and link labels refer to the first
/// graph; graph labels index the collection.
pub fn train_graphs(graphs: &[GraphSnapshot], labels: &LabelSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if labels.is_empty() {
        return Err(Error::Empty("no labeled targets"));
    }
    let first = graphs.first().ok_or(Error::Empty("no graphs"))?;
    let classes = if labels.task == Task::Link { 2 } else { cfg.num_classes };
    labels.validate(first.num_nodes(), graphs.len(), classes)?;
    let input = first.features().cols();
    if graphs.iter().any(|g| g.features().cols() != input) {
        return Err(Error::Dimension("graphs disagree on feature width".into()));
    }

    let mut weights = GnnWeights::init(labels.task, &cfg.dims(input), cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut adam = Adam::new(&weights, cfg.lr);
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        loss_history.push(evaluate(graphs, labels, &weights)?.0);
        let (loss, grads) = loss_and_gradient(graphs, labels, &weights, cfg.dropout, &mut rng);
        if !loss.is_finite() || grads.iter().any(|g| !g.iter().all(|v| v.is_finite())) {
            return Err(Error::TrainingDiverged { epoch, loss });
        }
        adam.step(&mut weights, &grads);
    }
    let accuracy = evaluate(graphs, labels, &weights)?.1;
    Ok(TrainOutcome {
        weights,
        loss_history,
        accuracy,
    })
}

/// Dropout-free `(mean loss, accuracy)` over the labeled targets.
pub(crate) fn evaluate(graphs: &[GraphSnapshot], labels: &LabelSet, w: &GnnWeights) -> Result<(f64, f64)> {
    let mut acts = Vec::with_capacity(graphs.len());
    for g in graphs {
        acts.push(forward(g, w)?);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (&target, &class) in &labels.labels {
        let logits = match target {
            TargetId::Node(v) => acts[0].output(v).to_vec(),
            TargetId::Link(i, j) => vec![0.0, link_score(&acts[0], i, j, w)?],
            TargetId::Graph(k) => graph_logits(&acts[k], w)?,
        };
        loss -= log_softmax(&logits)[class];
        correct += usize::from(argmax(&logits) == class);
    }
    let n = labels.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// One training pass through a single graph, keeping what backprop needs.
struct Pass {
    /// Aggregated dropped-out inputs `Σ_{u∈N(v)} drop(h_u^(t-1))`.
    aggregated: Vec<Matrix>,
    /// Inverted-dropout scale per input entry, absent when dropout is off.
    masks: Vec<Option<Vec<f64>>>,
    logits: Vec<Matrix>,
}

fn train_forward(g: &GraphSnapshot, w: &GnnWeights, dropout: f64, rng: &mut ChaCha8Rng) -> Pass {
    let depth = w.depth();
    let mut input = g.features().clone();
    let mut pass = Pass {
        aggregated: Vec::with_capacity(depth),
        masks: Vec::with_capacity(depth),
        logits: Vec::with_capacity(depth),
    };
    for t in 1..=depth {
        let mask = (dropout > 0.0).then(|| {
            let keep = 1.0 / (1.0 - dropout);
            (0..input.as_slice().len())
                .map(|_| if rng.gen::<f64>() < dropout { 0.0 } else { keep })
                .collect::<Vec<f64>>()
        });
        if let Some(mask) = &mask {
            let data = input.as_slice().iter().zip(mask).map(|(x, m)| x * m).collect();
            input = Matrix::from_vec(input.rows(), input.cols(), data);
        }
        let agg = aggregate(g, &input, None);
        let z = agg.matmul(w.layer(t));
        input = Matrix::from_vec(z.rows(), z.cols(), z.as_slice().iter().map(|v| v.max(0.0)).collect());
        pass.aggregated.push(agg);
        pass.masks.push(mask);
        pass.logits.push(z);
    }
    pass
}

/// Transpose of [`aggregate`]: scatters each row to its in-neighbors.
fn scatter(g: &GraphSnapshot, grad: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(grad.rows(), grad.cols());
    for v in 0..g.num_nodes() {
        for &u in g.neighbors(NodeId(v)) {
            for k in 0..grad.cols() {
                out[(u.0, k)] += grad[(v, k)];
            }
        }
    }
    out
}

fn backward(g: &GraphSnapshot, w: &GnnWeights, pass: &Pass, mut grad: Matrix, layer_grads: &mut [Matrix]) {
    for t in (1..=w.depth()).rev() {
        let d_theta = pass.aggregated[t - 1].transpose().matmul(&grad);
        for (acc, v) in layer_grads[t - 1].data_mut().iter_mut().zip(d_theta.as_slice()) {
            *acc += v;
        }
        if t == 1 {
            break;
        }
        let mut d_input = scatter(g, &grad.matmul(&w.layer(t).transpose()));
        let z_prev = &pass.logits[t - 2];
        let mask = pass.masks[t - 1].as_deref();
        for (i, d) in d_input.data_mut().iter_mut().enumerate() {
            let scale = mask.map_or(1.0, |m| m[i]);
            *d *= if z_prev.as_slice()[i] > 0.0 { scale } else { 0.0 };
        }
        grad = d_input;
    }
}

/// Mean cross-entropy with dropout active and its gradient. The last entry
/// of the returned gradients belongs to the head (empty for node tasks).
fn loss_and_gradient(
    graphs: &[GraphSnapshot],
    labels: &LabelSet,
    w: &GnnWeights,
    dropout: f64,
    rng: &mut ChaCha8Rng,
) -> (f64, Vec<Vec<f64>>) {
    let n = labels.len() as f64;
    let c = w.out_dim();
    let mut layer_grads: Vec<Matrix> = w.layers.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect();
    let mut head_grad = match &w.head {
        Head::None => Vec::new(),
        Head::Link(theta) => vec![0.0; theta.len()],
        Head::Graph(theta) => vec![0.0; theta.rows() * theta.cols()],
    };
    let mut loss = 0.0;

    match labels.task {
        Task::Node | Task::Link => {
            let g = &graphs[0];
            let pass = train_forward(g, w, dropout, rng);
            let out = pass.logits.last().unwrap();
            let mut grad = Matrix::zeros(out.rows(), c);
            for (&target, &class) in &labels.labels {
                match (target, &w.head) {
                    (TargetId::Node(v), _) => {
                        let z = out.row(v.0);
                        loss -= log_softmax(z)[class];
                        for (k, p) in softmax(z).into_iter().enumerate() {
                            grad[(v.0, k)] += (p - f64::from(u8::from(k == class))) / n;
                        }
                    }
                    (TargetId::Link(i, j), Head::Link(theta)) => {
                        let (zi, zj) = (out.row(i.0), out.row(j.0));
                        let s: f64 = zi.iter().zip(&theta[..c]).map(|(a, b)| a * b).sum::<f64>()
                            + zj.iter().zip(&theta[c..]).map(|(a, b)| a * b).sum::<f64>();
                        let y = class as f64;
                        loss -= log_softmax(&[0.0, s])[class];
                        let ds = (sigmoid(s) - y) / n;
                        for k in 0..c {
                            head_grad[k] += ds * zi[k];
                            head_grad[c + k] += ds * zj[k];
                        }
                        for k in 0..c {
                            grad[(i.0, k)] += ds * theta[k];
                            grad[(j.0, k)] += ds * theta[c + k];
                        }
                    }
                    _ => unreachable!("labels validated against the task"),
                }
            }
            backward(g, w, &pass, grad, &mut layer_grads);
        }
        Task::Graph => {
            let Head::Graph(theta) = &w.head else { unreachable!() };
            for (&target, &class) in &labels.labels {
                let TargetId::Graph(k) = target else { unreachable!() };
                let g = &graphs[k];
                let pass = train_forward(g, w, dropout, rng);
                let out = pass.logits.last().unwrap();
                let size = out.rows() as f64;
                let mut mean = out.column_sums();
                mean.iter_mut().for_each(|v| *v /= size);
                let u = theta.left_mul(&mean);
                loss -= log_softmax(&u)[class];
                let du: Vec<f64> = softmax(&u)
                    .into_iter()
                    .enumerate()
                    .map(|(k, p)| (p - f64::from(u8::from(k == class))) / n)
                    .collect();
                for a in 0..c {
                    for b in 0..c {
                        head_grad[a * c + b] += mean[a] * du[b];
                    }
                }
                let per_node: Vec<f64> = theta.right_mul(&du).into_iter().map(|v| v / size).collect();
                let mut grad = Matrix::zeros(out.rows(), c);
                for v in 0..out.rows() {
                    grad.row_mut(v).copy_from_slice(&per_node);
                }
                backward(g, w, &pass, grad, &mut layer_grads);
            }
        }
    }
    let mut grads: Vec<Vec<f64>> = layer_grads.into_iter().map(Matrix::into_vec).collect();
    grads.push(head_grad);
    (loss / n, grads)
}

struct Adam {
    lr: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(w: &GnnWeights, lr: f64) -> Self {
        let sizes: Vec<usize> = params(w).iter().map(|p| p.len()).collect();
        Self {
            lr,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn step(&mut self, w: &mut GnnWeights, grads: &[Vec<f64>]) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for (i, param) in params_mut(w).into_iter().enumerate() {
            for (k, p) in param.iter_mut().enumerate() {
                let g = grads[i][k];
                let m = &mut self.first[i][k];
                let v = &mut self.second[i][k];
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            }
        }
    }
}

fn params(w: &GnnWeights) -> Vec<&[f64]> {
    let mut out: Vec<&[f64]> = w.layers.iter().map(Matrix::as_slice).collect();
    out.push(match &w.head {
        Head::None => &[],
        Head::Link(theta) => theta,
        Head::Graph(theta) => theta.as_slice(),
    });
    out
}

fn params_mut(w: &mut GnnWeights) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = w.layers.iter_mut().map(Matrix::data_mut).collect();
    out.push(match &mut w.head {
        Head::None => &mut [],
        Head::Link(theta) => theta,
        Head::Graph(theta) => theta.data_mut(),
    });
    out
}
