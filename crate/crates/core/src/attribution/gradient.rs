//! Gradient baseline: sensitivity of a head logit to each arc's presence,
//! treating the arc as a continuous coefficient held at 1.

use crate::attribution::PairContext;
use crate::gnn::{GnnWeights, HeadMap, LayerActivations};
use crate::graph::{ChangeKind, GraphSnapshot, NodeId};
use crate::linalg::Matrix;
use crate::numeric::dot;
use crate::paths::RootedPaths;

/// `∂out / ∂a_{uv}` for every arc of a snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcGradients {
    neighbors: Vec<Vec<NodeId>>,
    grads: Vec<Vec<f64>>,
}

impl ArcGradients {
    /// Gradient of arc `from → to`, 0 when the arc does not exist.
    pub fn get(&self, from: NodeId, to: NodeId) -> f64 {
        match self.neighbors[to.0].binary_search(&from) {
            Ok(k) => self.grads[to.0][k],
            Err(_) => 0.0,
        }
    }

    /// Sum of arc gradients along a walk.
    pub fn walk_score(&self, nodes: &[NodeId]) -> f64 {
        nodes.windows(2).map(|s| self.get(s[0], s[1])).sum()
    }
}

/// Backpropagates `Σ_r ⟨seed_r, z_r⟩` to every arc coefficient:
/// `∂/∂a_{uv} = Σ_t ⟨h_u^(t-1) θ^(t), δ_v^(t)⟩`.
pub fn arc_gradients(
    g: &GraphSnapshot,
    weights: &GnnWeights,
    acts: &LayerActivations,
    seeds: &[(NodeId, Vec<f64>)],
) -> ArcGradients {
    let n = g.num_nodes();
    let neighbors: Vec<Vec<NodeId>> = (0..n).map(|v| g.neighbors(NodeId(v)).to_vec()).collect();
    let mut grads: Vec<Vec<f64>> = neighbors.iter().map(|l| vec![0.0; l.len()]).collect();
    let mut delta = Matrix::zeros(n, weights.out_dim());
    for (root, seed) in seeds {
        for (d, s) in delta.row_mut(root.0).iter_mut().zip(seed) {
            *d += s;
        }
    }
    for t in (1..=weights.depth()).rev() {
        let theta = weights.layer(t);
        let mut below = Matrix::zeros(n, theta.rows());
        for v in 0..n {
            if delta.row(v).iter().all(|x| *x == 0.0) {
                continue;
            }
            let back = theta.right_mul(delta.row(v));
            for (k, &u) in neighbors[v].iter().enumerate() {
                grads[v][k] += dot(acts.h(t - 1, u), &back);
                for (b, x) in below.row_mut(u.0).iter_mut().zip(&back) {
                    *b += x;
                }
            }
        }
        if t > 1 {
            for u in 0..n {
                let z = acts.z(t - 1, NodeId(u));
                for (b, zk) in below.row_mut(u).iter_mut().zip(z) {
                    if *zk <= 0.0 {
                        *b = 0.0;
                    }
                }
            }
        }
        delta = below;
    }
    ArcGradients { neighbors, grads }
}

/// Seeds for the centered head logit `u_class − mean_k u_k`, which carries
/// the same softmax information as `u_class` but is never identically zero
/// (the link head's class-0 logit is).
fn seeds(head: &HeadMap, class: usize) -> Vec<(NodeId, Vec<f64>)> {
    head.roots
        .iter()
        .map(|(r, m)| {
            let width = m.cols() as f64;
            let seed = m.iter_rows().map(|row| row[class] - row.iter().sum::<f64>() / width).collect();
            (*r, seed)
        })
        .collect()
}

/// Path scores for the gradient baseline. An altered path exists in one
/// snapshot only, so its score is the gradient sum there (class `class1`
/// on `G1` for added paths) and the negated sum on `G0` (class `class0`)
/// for removed ones.
pub fn grad_path_scores(
    ctx: &PairContext<'_>,
    head: &HeadMap,
    paths: &RootedPaths,
    class0: usize,
    class1: usize,
) -> Vec<f64> {
    let grad1 = arc_gradients(&ctx.pair.g1, ctx.weights, &ctx.acts1, &seeds(head, class1));
    let grad0 = arc_gradients(&ctx.pair.g0, ctx.weights, &ctx.acts0, &seeds(head, class0));
    paths
        .iter()
        .map(|(_, p)| match p.kind {
            ChangeKind::Added => grad1.walk_score(&p.nodes),
            ChangeKind::Removed => -grad0.walk_score(&p.nodes),
        })
        .collect()
}
