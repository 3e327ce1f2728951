//! Difference-from-reference attribution of logit changes to altered paths.
//!
//! For a path with cut layer `t̄`, neurons at layers `t ≥ t̄` are compared
//! against the same neuron on the reference snapshot, neurons below `t̄`
//! against zero. Linear layers pass multipliers through unchanged, ReLU
//! layers scale them by `Δh / Δz`. A path's contribution to the root's
//! logits is then
//!
//! ```text
//! C_p = x_{p0}ᵀ · θ¹ diag(r¹_{p1}) θ² diag(r²_{p2}) ⋯ θᵀ
//! ```
//!
//! and the contributions of all altered paths add up to `z(G1) − z(G0)`.
//! Added-kind paths use `G0` as reference; removed-kind paths are attributed
//! on the reversed pair and negated.

mod gradient;
mod lrp;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path as FsPath;

use rayon::prelude::*;

use crate::error::Result;
use crate::gnn::{forward, GnnWeights, LayerActivations};
use crate::graph::{ChangeKind, EvolutionPair, NodeId};
use crate::linalg::Matrix;
use crate::paths::{enumerate_altered_paths, AlteredPathSet, Path};

pub use gradient::{arc_gradients, grad_path_scores, ArcGradients};
pub use lrp::{gnn_lrp_scores, lrp_path_relevance};

/// Below this magnitude `Δh / Δz` falls back to the ReLU subgradient.
pub const RESCALE_EPS: f64 = 1e-9;

/// Weights plus cached activations on both snapshots of a pair.
pub struct PairContext<'a> {
    pub pair: &'a EvolutionPair,
    pub weights: &'a GnnWeights,
    pub acts0: LayerActivations,
    pub acts1: LayerActivations,
}

impl<'a> PairContext<'a> {
    pub fn new(pair: &'a EvolutionPair, weights: &'a GnnWeights) -> Result<Self> {
        Ok(Self {
            pair,
            weights,
            acts0: forward(&pair.g0, weights)?,
            acts1: forward(&pair.g1, weights)?,
        })
    }

    /// `(reference, current)` activations for paths of `kind`.
    fn roles(&self, kind: ChangeKind) -> (&LayerActivations, &LayerActivations) {
        match kind {
            ChangeKind::Added => (&self.acts0, &self.acts1),
            ChangeKind::Removed => (&self.acts1, &self.acts0),
        }
    }
}

/// Per-path `m × c` contributions to the root's logit change.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionMatrix {
    pub paths: AlteredPathSet,
    pub values: Matrix,
}

impl ContributionMatrix {
    pub fn root(&self) -> NodeId {
        self.paths.root
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Column sums, compensated.
    pub fn total(&self) -> Vec<f64> {
        (0..self.values.cols())
            .map(|j| crate::numeric::compensated_sum((0..self.values.rows()).map(|p| self.values[(p, j)])))
            .collect()
    }

    /// CSV `path_index,kind,class,contribution`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path_index,kind,class,contribution\n");
        for (i, p) in self.paths.paths.iter().enumerate() {
            for (j, v) in self.values.row(i).iter().enumerate() {
                let _ = writeln!(out, "{i},{},{j},{}", p.kind.as_str(), crate::json::format_f64(*v));
            }
        }
        out
    }

    pub fn write_csv(&self, path: &FsPath) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Differences from reference along one path: `dh[t]` for `t ∈ [0, T)` and
/// `dz[t - 1]` for `t ∈ [1, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDiff {
    pub dh: Vec<Vec<f64>>,
    pub dz: Vec<Vec<f64>>,
}

fn diff_at(reference: &[f64], current: &[f64], full: bool) -> Vec<f64> {
    if full {
        current.to_vec()
    } else {
        current.iter().zip(reference).map(|(c, r)| c - r).collect()
    }
}

/// `Δh` and `Δz` of every neuron on `path`: current minus reference at
/// layers `t ≥ t̄`, the full current activation below.
pub fn diff_from_reference(path: &Path, reference: &LayerActivations, current: &LayerActivations) -> LayerDiff {
    let depth = path.depth();
    let dh = (0..depth)
        .map(|t| diff_at(reference.h(t, path.nodes[t]), current.h(t, path.nodes[t]), t < path.t_bar))
        .collect();
    let dz = (1..=depth)
        .map(|t| diff_at(reference.z(t, path.nodes[t]), current.z(t, path.nodes[t]), t < path.t_bar))
        .collect();
    LayerDiff { dh, dz }
}

/// ReLU multipliers `Δh / Δz` at node `v`, layer `t`.
fn rescale(reference: &LayerActivations, current: &LayerActivations, t: usize, v: NodeId, full: bool) -> Vec<f64> {
    let (h_cur, z_cur) = (current.h(t, v), current.z(t, v));
    let (h_ref, z_ref) = (reference.h(t, v), reference.z(t, v));
    (0..z_cur.len())
        .map(|k| {
            let (dh, dz) = if full {
                (h_cur[k], z_cur[k])
            } else {
                (h_cur[k] - h_ref[k], z_cur[k] - z_ref[k])
            };
            if dz.abs() < RESCALE_EPS {
                if z_cur[k] > 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                dh / dz
            }
        })
        .collect()
}

/// `θ · diag(r) · below`.
fn chain_step(theta: &Matrix, r: &[f64], below: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(theta.rows(), below.cols());
    for i in 0..theta.rows() {
        let row = out.row_mut(i);
        for (j, rj) in r.iter().enumerate() {
            let a = theta[(i, j)] * rj;
            if a == 0.0 {
                continue;
            }
            for (o, b) in row.iter_mut().zip(below.row(j)) {
                *o += a * b;
            }
        }
    }
    out
}

fn finish(x: &[f64], b0: &Matrix, kind: ChangeKind) -> Vec<f64> {
    let row = b0.left_mul(x);
    match kind {
        ChangeKind::Added => row,
        ChangeKind::Removed => row.into_iter().map(|v| -v).collect(),
    }
}

/// One path's contribution row, computed without any sharing.
pub fn path_contribution(ctx: &PairContext<'_>, path: &Path) -> Vec<f64> {
    let (reference, current) = ctx.roles(path.kind);
    let depth = path.depth();
    let mut b = ctx.weights.layer(depth).clone();
    for t in (1..depth).rev() {
        let r = rescale(reference, current, t, path.nodes[t], t < path.t_bar);
        b = chain_step(ctx.weights.layer(t), &r, &b);
    }
    finish(current.h(0, path.nodes[0]), &b, path.kind)
}

/// Multiplier products `B_{t-1}` keyed by `(kind, p[t..=T])`. The suffix
/// alone fixes `B_{t-1}`: if it holds an altered step it fixes `t̄`,
/// otherwise `t̄ ≤ t` and every layer above uses differences.
struct ChainMemo<'c, 'a> {
    ctx: &'c PairContext<'a>,
    memo: HashMap<(ChangeKind, Vec<NodeId>), Matrix>,
}

impl ChainMemo<'_, '_> {
    fn product(&mut self, path: &Path, t: usize) -> Matrix {
        let depth = path.depth();
        if t == depth {
            return self.ctx.weights.layer(depth).clone();
        }
        let key = (path.kind, path.nodes[t..].to_vec());
        if let Some(b) = self.memo.get(&key) {
            return b.clone();
        }
        let above = self.product(path, t + 1);
        let (reference, current) = self.ctx.roles(path.kind);
        let r = rescale(reference, current, t, path.nodes[t], t < path.t_bar);
        let b = chain_step(self.ctx.weights.layer(t), &r, &above);
        self.memo.insert(key, b.clone());
        b
    }
}

fn collect(set: AlteredPathSet, rows: Vec<Vec<f64>>, width: usize) -> ContributionMatrix {
    let data = rows.into_iter().flatten().collect();
    let values = Matrix::from_vec(set.len(), width, data);
    ContributionMatrix { paths: set, values }
}

/// Contributions of every path in `set`, sharing multiplier products
/// between paths with a common suffix.
pub fn attribute_paths(ctx: &PairContext<'_>, set: AlteredPathSet) -> ContributionMatrix {
    let mut memo = ChainMemo {
        ctx,
        memo: HashMap::new(),
    };
    let rows: Vec<Vec<f64>> = set
        .paths
        .iter()
        .map(|p| {
            let (_, current) = ctx.roles(p.kind);
            let b0 = memo.product(p, 1);
            finish(current.h(0, p.nodes[0]), &b0, p.kind)
        })
        .collect();
    collect(set, rows, ctx.weights.out_dim())
}

/// Same as [`attribute_paths`] with every chain recomputed per path.
pub fn attribute_paths_naive(ctx: &PairContext<'_>, set: AlteredPathSet) -> ContributionMatrix {
    let rows = set.paths.iter().map(|p| path_contribution(ctx, p)).collect();
    collect(set, rows, ctx.weights.out_dim())
}

/// Enumerates the altered paths of `root` and attributes them.
pub fn attribute_target(ctx: &PairContext<'_>, root: NodeId, max_paths: usize) -> Result<ContributionMatrix> {
    let set = enumerate_altered_paths(ctx.pair, root, ctx.weights.depth(), max_paths)?;
    Ok(attribute_paths(ctx, set))
}

/// [`attribute_target`] for several roots in parallel, in root order.
pub fn attribute_roots(ctx: &PairContext<'_>, roots: &[NodeId], max_paths: usize) -> Result<Vec<ContributionMatrix>> {
    let out = roots
        .par_iter()
        .map(|&r| attribute_target(ctx, r, max_paths))
        .collect::<Result<Vec<_>>>()?;
    let total: usize = out.iter().map(ContributionMatrix::len).sum();
    if total > max_paths {
        return Err(crate::Error::CapacityExceeded { limit: max_paths });
    }
    Ok(out)
}
