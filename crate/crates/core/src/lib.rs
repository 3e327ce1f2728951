//! Explaining how a fixed graph neural network's predicted class distribution
//! moves when its input graph evolves from one snapshot to the next.
//!
//! The pipeline is:
//!
//! 1. [`graph`]: ingest timestamped edges, materialize snapshots `G0`/`G1`
//!    and the altered edge set between them.
//! 2. [`gnn`]: a sum-aggregation message-passing network with node, link and
//!    graph heads, plus a small full-batch trainer.
//! 3. [`paths`]: enumerate the computation paths that traverse an altered edge.
//! 4. [`attribution`]: attribute the logit change to those paths with
//!    difference-from-reference multipliers (completeness holds exactly).
//! 5. [`geometry`]: KL divergence in contribution coordinates and the Fisher
//!    metric on the resulting distribution manifold.
//! 6. [`selection`]: the convex curve-selection program over the box-capped
//!    simplex and its linear / top-k baselines.
//! 7. [`harness`]: target selection, KL⁺/KL⁻ fidelity metrics, method
//!    comparison and reports.

pub mod attribution;
pub mod error;
pub mod geometry;
pub mod gnn;
pub mod graph;
pub mod harness;
pub mod json;
pub mod linalg;
pub mod numeric;
pub mod paths;
pub mod selection;

pub use error::{Error, Result};
pub use graph::{ChangeKind, Edge, EvolutionPair, GraphSnapshot, NodeId, Task};
pub use linalg::Matrix;
