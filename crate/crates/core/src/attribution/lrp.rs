//! Layer-wise relevance propagation over walks (the `γ = 0` rule).
//!
//! The relevance a neuron `v` at layer `t` passes down to neuron `u` of the
//! previous layer is `h_u θ_uv / z_v` times its own relevance, starting from
//! `R_j = z_j`. Along one walk the `z_j` cancels and the relevance collapses
//! to `x_{p0}ᵀ θ¹ diag(h¹/z¹) θ² ⋯ θᵀ`, which is what is accumulated here.

use crate::error::{Error, Result};
use crate::gnn::{GnnWeights, LayerActivations};
use crate::graph::{GraphSnapshot, NodeId};

/// Relevance of the walk `nodes` (leaf to root) for every output class.
pub fn lrp_path_relevance(acts: &LayerActivations, weights: &GnnWeights, nodes: &[NodeId]) -> Vec<f64> {
    let depth = weights.depth();
    let mut s = weights.layer(1).left_mul(acts.h(0, nodes[0]));
    for t in 1..depth {
        let (h, z) = (acts.h(t, nodes[t]), acts.z(t, nodes[t]));
        for (k, v) in s.iter_mut().enumerate() {
            *v *= if z[k] == 0.0 { 0.0 } else { h[k] / z[k] };
        }
        s = weights.layer(t + 1).left_mul(&s);
    }
    s
}

/// Every depth-`T` walk of `g` ending at `root` with its relevance for
/// `class`, walks in lexicographic order.
pub fn gnn_lrp_scores(
    g: &GraphSnapshot,
    acts: &LayerActivations,
    weights: &GnnWeights,
    root: NodeId,
    class: usize,
    max_paths: usize,
) -> Result<Vec<(Vec<NodeId>, f64)>> {
    if root.0 >= g.num_nodes() {
        return Err(Error::UnknownNode(root.0));
    }
    let depth = weights.depth();
    let mut walks = Vec::new();
    let mut buf = vec![root; depth + 1];
    fn descend(g: &GraphSnapshot, t: usize, buf: &mut Vec<NodeId>, out: &mut Vec<Vec<NodeId>>, limit: usize) -> Result<()> {
        if t == 0 {
            if out.len() >= limit {
                return Err(Error::CapacityExceeded { limit });
            }
            out.push(buf.clone());
            return Ok(());
        }
        for &u in g.neighbors(buf[t]) {
            buf[t - 1] = u;
            descend(g, t - 1, buf, out, limit)?;
        }
        Ok(())
    }
    descend(g, depth, &mut buf, &mut walks, max_paths)?;
    walks.sort_unstable();
    Ok(walks
        .into_iter()
        .map(|w| {
            let r = lrp_path_relevance(acts, weights, &w)[class];
            (w, r)
        })
        .collect())
}
