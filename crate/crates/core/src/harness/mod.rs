//! Target selection, the KL⁺ / KL⁻ fidelity metrics, method comparison
//! across budget levels, and report emission.
//!
//! Every metric is computed in head space: each selected path contributes
//! its row of the head-mapped contribution matrix `D`, so masking adds or
//! removes rows rather than rebuilding input graphs.

mod report;
mod synthetic;

use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{emit_report, records_csv, summarize, summary_json, svg_chart, Metric, ReportFiles, ReportOptions, SummaryRow};
pub use synthetic::{generate, Evolution, SyntheticConfig, SyntheticData};

use crate::attribution::{attribute_paths, grad_path_scores, lrp_path_relevance, ContributionMatrix, PairContext};
use crate::error::{Error, Result};
use crate::geometry::kl_from_logits;
use crate::gnn::{forward, ClassDistribution, GnnWeights, HeadMap, LayerActivations, TrainConfig};
use crate::graph::{ChangeKind, EvolutionPair, NodeId, TargetId, Task};
use crate::numeric::{argmax, compensated_sum};
use crate::paths::{enumerate_roots, RootedPaths, DEFAULT_MAX_PATHS};
use crate::selection::{select_topk, solve_convex, solve_linear, top_n, SelectedPaths, SelectionProblem, SolverConfig};

/// Default `KL(Pr(G1) ‖ Pr(G0))` a target must exceed.
pub const DEFAULT_THRESHOLD: f64 = 0.001;

/// Targets with at most this many altered paths fall below the smallest bin.
pub const MIN_ALTERED_PATHS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetInstance {
    pub task: Task,
    pub target: TargetId,
    /// Index of the snapshot pair the target lives in.
    pub pair: usize,
    /// Altered path count.
    pub m: usize,
    /// `KL(Pr(G1) ‖ Pr(G0))`.
    pub base_kl: f64,
}

impl TargetInstance {
    /// Row label used in reports: the target id, suffixed with the pair
    /// index for node / link targets of later pairs.
    pub fn label(&self) -> String {
        match self.target {
            TargetId::Graph(_) => self.target.to_string(),
            _ if self.pair == 0 => self.target.to_string(),
            _ => format!("{}@{}", self.target, self.pair),
        }
    }
}

fn head_logits(head: &HeadMap, acts0: &LayerActivations, acts1: &LayerActivations) -> (Vec<f64>, Vec<f64>) {
    (head.apply(acts0), head.apply(acts1))
}

fn head_roots(head: &HeadMap) -> Vec<NodeId> {
    head.roots.iter().map(|(r, _)| *r).collect()
}

/// Measures one target: altered path count and base KL.
pub fn measure_target(
    pairs: &[EvolutionPair],
    pair: usize,
    weights: &GnnWeights,
    target: TargetId,
    max_paths: usize,
) -> Result<TargetInstance> {
    let p = pairs
        .get(pair)
        .ok_or_else(|| Error::Config(format!("snapshot pair {pair} does not exist")))?;
    check_task(weights, target)?;
    let head = HeadMap::for_target(target, weights, p.num_nodes())?;
    let (u0, u1) = head_logits(&head, &forward(&p.g0, weights)?, &forward(&p.g1, weights)?);
    let m = enumerate_roots(p, &head_roots(&head), weights.depth(), max_paths)?.len();
    Ok(TargetInstance {
        task: target.task(),
        target,
        pair,
        m,
        base_kl: kl_from_logits(&u1, &u0),
    })
}

fn check_task(weights: &GnnWeights, target: TargetId) -> Result<()> {
    if target.task() != weights.task {
        return Err(Error::Config(format!(
            "{} target {target} for a {} network",
            target.task(),
            weights.task
        )));
    }
    Ok(())
}

/// Targets a pair offers: every node, every edge present in either
/// snapshot, or the graph itself (identified by its pair index).
fn candidates(pair: &EvolutionPair, index: usize, task: Task) -> Vec<TargetId> {
    match task {
        Task::Node => (0..pair.num_nodes()).map(|v| TargetId::Node(NodeId(v))).collect(),
        Task::Link => {
            let mut edges = pair.g0.connectivity();
            edges.extend(pair.g1.connectivity());
            edges
                .into_iter()
                .filter(|e| !e.is_self_loop())
                .map(|e| {
                    let (a, b) = if e.src <= e.dst { (e.src, e.dst) } else { (e.dst, e.src) };
                    TargetId::Link(a, b)
                })
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect()
        }
        Task::Graph => vec![TargetId::Graph(index)],
    }
}

/// Every target whose distribution moved by more than `threshold` and that
/// has more than [`MIN_ALTERED_PATHS`] altered paths, in pair then target
/// order. Targets exceeding `max_paths` are skipped with a warning.
pub fn select_targets(pairs: &[EvolutionPair], weights: &GnnWeights, threshold: f64, max_paths: usize) -> Vec<TargetInstance> {
    let task = weights.task;
    let mut out = Vec::new();
    for (index, pair) in pairs.iter().enumerate() {
        let (acts0, acts1) = match (forward(&pair.g0, weights), forward(&pair.g1, weights)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                log::warn!("pair {index}: {e}");
                continue;
            }
        };
        let found: Vec<Option<TargetInstance>> = candidates(pair, index, task)
            .into_par_iter()
            .map(|target| {
                let head = HeadMap::for_target(target, weights, pair.num_nodes()).ok()?;
                let (u0, u1) = head_logits(&head, &acts0, &acts1);
                let base_kl = kl_from_logits(&u1, &u0);
                if base_kl <= threshold {
                    return None;
                }
                match enumerate_roots(pair, &head_roots(&head), weights.depth(), max_paths) {
                    Ok(paths) if paths.len() > MIN_ALTERED_PATHS => Some(TargetInstance {
                        task,
                        target,
                        pair: index,
                        m: paths.len(),
                        base_kl,
                    }),
                    Ok(_) => None,
                    Err(e) => {
                        log::warn!("target {target} skipped: {e}");
                        None
                    }
                }
            })
            .collect();
        out.extend(found.into_iter().flatten());
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub path_search: Duration,
    pub attribution: Duration,
}

/// A target with its altered paths attributed and mapped to head space.
#[derive(Debug, Clone)]
pub struct ExplainedTarget {
    pub instance: TargetInstance,
    pub head: HeadMap,
    pub paths: RootedPaths,
    /// Node-logit contributions per head root, in root order.
    pub contributions: Vec<ContributionMatrix>,
    pub problem: SelectionProblem,
    /// Predicted head class on `G0` and on `G1`.
    pub class0: usize,
    pub class1: usize,
    pub timings: StageTimings,
}

pub fn explain_target(pairs: &[EvolutionPair], weights: &GnnWeights, instance: &TargetInstance, max_paths: usize) -> Result<ExplainedTarget> {
    let pair = pairs
        .get(instance.pair)
        .ok_or_else(|| Error::Config(format!("snapshot pair {} does not exist", instance.pair)))?;
    check_task(weights, instance.target)?;
    let ctx = PairContext::new(pair, weights)?;
    let head = HeadMap::for_target(instance.target, weights, pair.num_nodes())?;

    let started = Instant::now();
    let paths = enumerate_roots(pair, &head_roots(&head), weights.depth(), max_paths)?;
    let path_search = started.elapsed();

    let started = Instant::now();
    let contributions: Vec<ContributionMatrix> = paths
        .sets
        .par_iter()
        .map(|set| attribute_paths(&ctx, set.clone()))
        .collect();
    let (u0, u1) = head_logits(&head, &ctx.acts0, &ctx.acts1);
    let problem = SelectionProblem::from_head(&head, u0.clone(), &contributions)?;
    let attribution = started.elapsed();

    Ok(ExplainedTarget {
        instance: TargetInstance {
            m: paths.len(),
            ..instance.clone()
        },
        head,
        paths,
        contributions,
        problem,
        class0: argmax(&u0),
        class1: argmax(&u1),
        timings: StageTimings { path_search, attribution },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskDirection {
    /// Start from `G1` and switch the selected paths off.
    DisableOnG1,
    /// Start from `G0` and switch the selected paths on.
    EnableOnG0,
}

/// Head logits after masking. Disabling `E_n` on `G1` is written as
/// `u0 + Σ_{p ∉ E_n} D_p`, which equals `u1 − Σ_{p ∈ E_n} D_p` by
/// completeness and makes the all-paths case land exactly on `u0`.
pub fn masked_logits(problem: &SelectionProblem, selected: &[usize], direction: MaskDirection) -> Vec<f64> {
    let m = problem.num_paths();
    let mut chosen = vec![false; m];
    for &i in selected {
        chosen[i] = true;
    }
    let keep_selected = direction == MaskDirection::EnableOnG0;
    let rows: Vec<usize> = (0..m).filter(|&p| chosen[p] == keep_selected).collect();
    let d = problem.contributions();
    problem
        .base()
        .iter()
        .enumerate()
        .map(|(j, b)| b + compensated_sum(rows.iter().map(|&p| d[(p, j)])))
        .collect()
}

pub fn masked_distribution(problem: &SelectionProblem, selected: &[usize], direction: MaskDirection) -> ClassDistribution {
    ClassDistribution::from_logits(&masked_logits(problem, selected, direction))
}

/// Head logits with every path switched on.
pub fn full_logits(problem: &SelectionProblem) -> Vec<f64> {
    masked_logits(problem, &[], MaskDirection::DisableOnG1)
}

/// `KL(Pr(G0) ‖ Pr(¬E_n on G1))`.
pub fn kl_plus(problem: &SelectionProblem, selected: &[usize]) -> f64 {
    kl_from_logits(problem.base(), &masked_logits(problem, selected, MaskDirection::DisableOnG1))
}

/// `KL(Pr(G1) ‖ Pr(E_n on G0))`.
pub fn kl_minus(problem: &SelectionProblem, selected: &[usize]) -> f64 {
    kl_from_logits(&full_logits(problem), &masked_logits(problem, selected, MaskDirection::EnableOnG0))
}

/// Budget bin `(above, up_to]` over the altered path count and the budget
/// levels evaluated for targets inside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelBin {
    pub above: usize,
    /// `None` leaves the bin unbounded.
    #[serde(default)]
    pub up_to: Option<usize>,
    pub levels: Vec<usize>,
}

impl LevelBin {
    pub fn contains(&self, m: usize) -> bool {
        m > self.above && self.up_to.is_none_or(|u| m <= u)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexityLevels {
    pub bins: Vec<LevelBin>,
}

impl ComplexityLevels {
    pub fn for_task(task: Task) -> Self {
        let bin = |above, up_to, levels: &[usize]| LevelBin {
            above,
            up_to,
            levels: levels.to_vec(),
        };
        let (second, third, fourth): (&[usize], &[usize], &[usize]) = match task {
            Task::Node => (&[6, 7, 8, 9, 10], &[10, 11, 12, 13, 14], &[15, 16, 17, 18, 19]),
            Task::Link => (&[10, 12, 14, 16, 18], &[10, 20, 30, 40, 50], &[60, 70, 80, 90, 100]),
            Task::Graph => (&[3, 4, 5, 6, 7], &[6, 7, 8, 9, 10], &[10, 11, 12, 13, 14]),
        };
        Self {
            bins: vec![
                bin(10, Some(100), &[1, 2, 3, 4, 5]),
                bin(100, Some(500), second),
                bin(500, Some(1000), third),
                bin(1000, None, fourth),
            ],
        }
    }

    /// Bins must be ordered, disjoint and non-empty; every level list must
    /// be strictly ascending, start at 1 or above and fit inside its bin.
    pub fn validate(&self) -> Result<()> {
        if self.bins.is_empty() {
            return Err(Error::Config("no complexity bins".into()));
        }
        let mut floor = 0;
        for (i, b) in self.bins.iter().enumerate() {
            if i > 0 && b.above < floor {
                return Err(Error::Config(format!("complexity bin {i} overlaps its predecessor")));
            }
            match b.up_to {
                Some(u) if u <= b.above => return Err(Error::Config(format!("complexity bin {i} is empty"))),
                Some(u) => floor = u,
                None if i + 1 != self.bins.len() => {
                    return Err(Error::Config("only the last complexity bin may be unbounded".into()))
                }
                None => {}
            }
            if b.levels.is_empty() || b.levels[0] == 0 || b.levels.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!("levels of complexity bin {i} must be positive and ascending")));
            }
            if b.levels.last().is_some_and(|&n| n > b.above + 1) {
                return Err(Error::Config(format!("complexity bin {i} has a level above its path count")));
            }
        }
        Ok(())
    }

    pub fn bin_index(&self, m: usize) -> Option<usize> {
        self.bins.iter().position(|b| b.contains(m))
    }

    pub fn levels_for(&self, m: usize) -> Option<&[usize]> {
        self.bin_index(m).map(|i| self.bins[i].levels.as_slice())
    }

    pub fn max_levels(&self) -> usize {
        self.bins.iter().map(|b| b.levels.len()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Convex,
    Linear,
    Topk,
    GnnLrp,
    DeepliftRank,
    Gradient,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Convex,
        Method::Linear,
        Method::Topk,
        Method::GnnLrp,
        Method::DeepliftRank,
        Method::Gradient,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Convex => "convex",
            Method::Linear => "linear",
            Method::Topk => "topk",
            Method::GnnLrp => "gnn_lrp",
            Method::DeepliftRank => "deeplift_rank",
            Method::Gradient => "gradient",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

fn centered(row: &[f64], class: usize) -> f64 {
    row[class] - row.iter().sum::<f64>() / row.len() as f64
}

/// Per-path ranking scores of a rank-based method; `None` for the convex
/// program, which selects by solving rather than ranking.
///
/// Class scores use centered head logits `u_j − mean_k u_k`, which leave
/// the softmax unchanged and keep the link head's constant class-0 logit
/// from scoring every path zero.
pub fn rank_scores(pairs: &[EvolutionPair], weights: &GnnWeights, ex: &ExplainedTarget, method: Method) -> Result<Option<Vec<f64>>> {
    let problem = &ex.problem;
    let d = problem.contributions();
    let scores = match method {
        Method::Convex => return Ok(None),
        Method::Linear => problem.linear_scores(),
        Method::Topk => problem.row_sums(),
        Method::DeepliftRank => (0..d.rows())
            .map(|p| {
                let row = d.row(p);
                if ex.class0 != ex.class1 {
                    row[ex.class1] - row[ex.class0]
                } else {
                    centered(row, ex.class1)
                }
            })
            .collect(),
        Method::GnnLrp | Method::Gradient => {
            let pair = &pairs[ex.instance.pair];
            let ctx = PairContext::new(pair, weights)?;
            if method == Method::Gradient {
                grad_path_scores(&ctx, &ex.head, &ex.paths, ex.class0, ex.class1)
            } else {
                ex.paths
                    .iter()
                    .map(|(r, p)| {
                        let (acts, sign) = match p.kind {
                            ChangeKind::Added => (&ctx.acts1, 1.0),
                            ChangeKind::Removed => (&ctx.acts0, -1.0),
                        };
                        let relevance = ex.head.roots[r].1.left_mul(&lrp_path_relevance(acts, weights, &p.nodes));
                        sign * centered(&relevance, ex.class1)
                    })
                    .collect()
            }
        }
    };
    Ok(Some(scores))
}

/// Selects `n` paths with `method`, reusing precomputed rank scores.
pub fn select_with(problem: &SelectionProblem, method: Method, scores: Option<&[f64]>, n: usize, solver: &SolverConfig) -> Result<SelectedPaths> {
    match (method, scores) {
        (Method::Convex, _) => solve_convex(problem, n, solver),
        (Method::Linear, None) => solve_linear(problem, n),
        (Method::Topk, None) => select_topk(problem, n),
        (_, Some(s)) => {
            if n == 0 || n > problem.num_paths() {
                return Err(Error::Budget { n, m: problem.num_paths() });
            }
            let indices = top_n(s, n);
            let mut weights = vec![0.0; problem.num_paths()];
            for &i in &indices {
                weights[i] = 1.0;
            }
            Ok(SelectedPaths {
                objective: problem.objective(&weights),
                indices,
                weights,
                iterations: 0,
                kkt_residual: f64::NAN,
                gap: f64::NAN,
                converged: true,
                trace: Vec::new(),
            })
        }
        (m, None) => Err(Error::Config(format!("method {m} needs rank scores"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub target: String,
    pub task: Task,
    pub m: usize,
    pub method: Method,
    /// 1-based position of `n` in the target's level list.
    pub level: usize,
    pub n: usize,
    pub kl_plus: f64,
    pub kl_minus: f64,
    pub wall_ms: f64,
    /// Convex solves only.
    pub kkt_residual: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetFailure {
    pub target: String,
    /// `None` when the whole target failed.
    pub method: Option<Method>,
    pub n: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparisonConfig {
    pub solver: SolverConfig,
    pub max_paths: usize,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            max_paths: DEFAULT_MAX_PATHS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Comparison {
    pub records: Vec<EvalRecord>,
    pub failures: Vec<TargetFailure>,
}

/// Evaluates every method at every budget level of each target's bin.
/// Targets run in parallel; results keep target order then method order.
pub fn run_comparison(
    pairs: &[EvolutionPair],
    weights: &GnnWeights,
    targets: &[TargetInstance],
    methods: &[Method],
    levels: &ComplexityLevels,
    cfg: &ComparisonConfig,
) -> Comparison {
    let per_target: Vec<Comparison> = targets
        .par_iter()
        .map(|t| evaluate_target(pairs, weights, t, methods, levels, cfg))
        .collect();
    let mut out = Comparison::default();
    for c in per_target {
        out.records.extend(c.records);
        out.failures.extend(c.failures);
    }
    out
}

fn evaluate_target(
    pairs: &[EvolutionPair],
    weights: &GnnWeights,
    target: &TargetInstance,
    methods: &[Method],
    levels: &ComplexityLevels,
    cfg: &ComparisonConfig,
) -> Comparison {
    let label = target.label();
    let mut out = Comparison::default();
    let fail = |method, n, message: String| TargetFailure {
        target: label.clone(),
        method,
        n,
        message,
    };
    let Some(level_list) = levels.levels_for(target.m) else {
        out.failures.push(fail(None, None, format!("no complexity bin holds m = {}", target.m)));
        return out;
    };
    let ex = match explain_target(pairs, weights, target, cfg.max_paths) {
        Ok(ex) => ex,
        Err(e) => {
            out.failures.push(fail(None, None, e.to_string()));
            return out;
        }
    };
    for &method in methods {
        let started = Instant::now();
        let scores = match rank_scores(pairs, weights, &ex, method) {
            Ok(s) => s,
            Err(e) => {
                out.failures.push(fail(Some(method), None, e.to_string()));
                continue;
            }
        };
        let scoring = started.elapsed();
        for (i, &n) in level_list.iter().enumerate() {
            let started = Instant::now();
            match select_with(&ex.problem, method, scores.as_deref(), n, &cfg.solver) {
                Ok(sel) => {
                    if method == Method::Convex && !sel.converged {
                        log::warn!("{label}: convex solve at n = {n} stopped with KKT residual {:.3e}", sel.kkt_residual);
                    }
                    let elapsed = scoring + started.elapsed();
                    out.records.push(EvalRecord {
                        target: label.clone(),
                        task: target.task,
                        m: ex.instance.m,
                        method,
                        level: i + 1,
                        n,
                        kl_plus: kl_plus(&ex.problem, &sel.indices),
                        kl_minus: kl_minus(&ex.problem, &sel.indices),
                        wall_ms: elapsed.as_secs_f64() * 1e3,
                        kkt_residual: (method == Method::Convex).then_some(sel.kkt_residual),
                        converged: sel.converged,
                    });
                }
                Err(e) => out.failures.push(fail(Some(method), Some(n), e.to_string())),
            }
        }
    }
    out
}

/// Everything a synthetic evaluation run needs and produces.
#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub data: SyntheticData,
    pub weights: GnnWeights,
    pub train_accuracy: f64,
    pub targets: Vec<TargetInstance>,
    pub comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub synthetic: SyntheticConfig,
    pub train: TrainConfig,
    pub threshold: f64,
    pub comparison: ComparisonConfig,
    /// `None` uses the default table for the task.
    pub levels: Option<ComplexityLevels>,
    /// Caps the number of evaluated targets (first in target order).
    pub max_targets: Option<usize>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticConfig::default(),
            train: TrainConfig {
                layers: 3,
                epochs: 100,
                ..TrainConfig::default()
            },
            threshold: DEFAULT_THRESHOLD,
            comparison: ComparisonConfig::default(),
            levels: None,
            max_targets: None,
        }
    }
}

/// Generates a synthetic suite, trains on `G0`, selects targets and runs
/// the comparison.
pub fn run_suite(cfg: &SuiteConfig, methods: &[Method]) -> Result<SuiteRun> {
    let data = generate(&cfg.synthetic)?;
    let trained = data.train(&cfg.train)?;
    let levels = cfg.levels.clone().unwrap_or_else(|| ComplexityLevels::for_task(data.task));
    levels.validate()?;
    let mut targets = select_targets(&data.pairs, &trained.weights, cfg.threshold, cfg.comparison.max_paths);
    if let Some(k) = cfg.max_targets {
        targets.truncate(k);
    }
    let comparison = run_comparison(&data.pairs, &trained.weights, &targets, methods, &levels, &cfg.comparison);
    Ok(SuiteRun {
        data,
        weights: trained.weights,
        train_accuracy: trained.accuracy,
        targets,
        comparison,
    })
}
