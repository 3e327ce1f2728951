//! Curve selection: choose `n` of `m` altered paths whose contributions best
//! explain the move from `Pr(G0)` to `Pr(G1)`.
//!
//! Every task reduces to the same head-space problem. Let `u0` be the head
//! logits on `G0` and let row `p` of `D` be path `p`'s contribution mapped
//! through the head. Weighting paths by `x ∈ [0,1]^m` gives logits
//! `u(x) = u0 + Dᵀx` and the convex objective
//!
//! ```text
//! f(x) = Σ_j π1_j (Σ_p D_pj − (Dᵀx)_j) + log Σ_j exp u(x)_j
//! ```
//!
//! with `π1 = softmax(u0 + 1ᵀD)`. Up to the constant `log Z(G1)`, `f` is
//! `KL(π1 ‖ softmax(u(x)))`. It is minimized over `{x ∈ [0,1]^m, Σx = n}`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::attribution::ContributionMatrix;
use crate::error::{Error, Result};
use crate::gnn::HeadMap;
use crate::linalg::Matrix;
use crate::numeric::{compensated_sum, log_sum_exp, softmax};

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionProblem {
    base: Vec<f64>,
    contributions: Matrix,
    target: Vec<f64>,
    /// `Σ_j π1_j Σ_p D_pj`, the constant part of the linear term.
    offset: f64,
}

impl SelectionProblem {
    /// `base` are the head logits on `G0`, row `p` of `contributions` the
    /// head-space contribution of path `p`.
    pub fn new(base: Vec<f64>, contributions: Matrix) -> Result<Self> {
        if contributions.cols() != base.len() || base.is_empty() {
            return Err(Error::dim(format!(
                "{} base logits but {} contribution columns",
                base.len(),
                contributions.cols()
            )));
        }
        let totals = column_totals(&contributions);
        let full: Vec<f64> = base.iter().zip(&totals).map(|(b, t)| b + t).collect();
        let target = softmax(&full);
        let offset = compensated_sum(target.iter().zip(&totals).map(|(p, t)| p * t));
        Ok(Self {
            base,
            contributions,
            target,
            offset,
        })
    }

    /// Node target: contributions are already in logit space.
    pub fn node(base: Vec<f64>, contributions: &ContributionMatrix) -> Result<Self> {
        Self::new(base, contributions.values.clone())
    }

    /// Maps each root's contribution matrix through its head block and
    /// stacks the results, in root order. Covers link targets (two roots,
    /// one joint budget) and graph targets (every node, pooled through the
    /// graph head).
    pub fn from_head(head: &HeadMap, base: Vec<f64>, roots: &[ContributionMatrix]) -> Result<Self> {
        if roots.len() != head.roots.len() {
            return Err(Error::dim(format!("{} root blocks for {} head roots", roots.len(), head.roots.len())));
        }
        let m: usize = roots.iter().map(ContributionMatrix::len).sum();
        let mut data = Vec::with_capacity(m * head.width);
        for (cm, (root, block)) in roots.iter().zip(&head.roots) {
            if cm.root() != *root {
                return Err(Error::Config(format!("contributions for {} given for head root {root}", cm.root())));
            }
            for p in 0..cm.len() {
                data.extend(block.left_mul(cm.values.row(p)));
            }
        }
        Self::new(base, Matrix::from_vec(m, head.width, data))
    }

    pub fn num_paths(&self) -> usize {
        self.contributions.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.base.len()
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn contributions(&self) -> &Matrix {
        &self.contributions
    }

    /// `π1`, the distribution reached with every path switched on.
    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// Head logits `u0 + Dᵀx`.
    pub fn logits_at(&self, x: &[f64]) -> Vec<f64> {
        let shift = self.contributions.left_mul(x);
        self.base.iter().zip(shift).map(|(b, s)| b + s).collect()
    }

    /// `log Z(G1)`, the constant separating `f` from the KL divergence.
    pub fn log_partition_target(&self) -> f64 {
        log_sum_exp(&self.logits_at(&vec![1.0; self.num_paths()]))
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let u = self.logits_at(x);
        let shift = self.contributions.left_mul(x);
        let linear = self.offset - compensated_sum(self.target.iter().zip(&shift).map(|(p, s)| p * s));
        linear + log_sum_exp(&u)
    }

    /// `f(x + s) − f(x)` given `softmax(u(x))`, evaluated as
    /// `−π1ᵀΔ + log(1 + Σ_j q_j (e^{Δ_j} − 1))` with `Δ = Dᵀs` so that tiny
    /// steps are not lost to cancellation.
    pub fn objective_change(&self, probs: &[f64], s: &[f64]) -> f64 {
        let delta = self.contributions.left_mul(s);
        let linear = compensated_sum(self.target.iter().zip(&delta).map(|(p, d)| p * d));
        let growth = compensated_sum(probs.iter().zip(&delta).map(|(q, d)| q * d.exp_m1()));
        growth.ln_1p() - linear
    }

    /// `∇f = D (softmax(u(x)) − π1)`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let q = softmax(&self.logits_at(x));
        let diff: Vec<f64> = q.iter().zip(&self.target).map(|(a, b)| a - b).collect();
        self.contributions.right_mul(&diff)
    }

    /// `KL(π1 ‖ softmax(u(x)))`.
    pub fn kl_at(&self, x: &[f64]) -> f64 {
        crate::geometry::kl_from_logits(&self.logits_at(&vec![1.0; self.num_paths()]), &self.logits_at(x))
    }

    /// Coefficients of the objective with the log-partition term dropped,
    /// negated so that larger is better: `D π1`.
    pub fn linear_scores(&self) -> Vec<f64> {
        self.contributions.right_mul(&self.target)
    }

    /// `D 1`, each path's contribution summed over classes.
    pub fn row_sums(&self) -> Vec<f64> {
        self.contributions.iter_rows().map(|r| r.iter().sum()).collect()
    }
}

fn column_totals(m: &Matrix) -> Vec<f64> {
    (0..m.cols())
        .map(|j| compensated_sum((0..m.rows()).map(|p| m[(p, j)])))
        .collect()
}

fn check_budget(n: usize, m: usize) -> Result<()> {
    if n == 0 || n > m {
        return Err(Error::Budget { n, m });
    }
    Ok(())
}

fn clipped_sum(y: &[f64], lambda: f64) -> f64 {
    y.iter().map(|v| (v - lambda).clamp(0.0, 1.0)).sum()
}

/// Euclidean projection onto `{x ∈ [0,1]^m, Σx = n}`: `x = clip(y − λ, 0, 1)`
/// where `λ` solves `Σ clip(y − λ) = n`. The sum is piecewise linear in `λ`
/// with breakpoints at `y_i` and `y_i − 1`, so bisection over the sorted
/// breakpoints brackets `λ` and one linear solve finishes it.
pub fn project_box_capped_simplex(y: &[f64], n: f64) -> Vec<f64> {
    let m = y.len();
    assert!(n >= 0.0 && n <= m as f64, "budget {n} outside [0, {m}]");
    if n == m as f64 {
        return vec![1.0; m];
    }
    if n == 0.0 {
        return vec![0.0; m];
    }
    let mut points: Vec<f64> = y.iter().flat_map(|v| [*v, v - 1.0]).collect();
    points.sort_unstable_by(f64::total_cmp);
    // the sum is non-increasing in λ: find the last breakpoint with sum ≥ n
    let (mut lo, mut hi) = (0, points.len() - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if clipped_sum(y, points[mid]) >= n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, b) = (points[lo], points[hi]);
    let (sa, sb) = (clipped_sum(y, a), clipped_sum(y, b));
    let lambda = if sa == sb { a } else { a + (sa - n) / (sa - sb) * (b - a) };
    y.iter().map(|v| (v - lambda).clamp(0.0, 1.0)).collect()
}

pub const STALL_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Objective tolerance relative to `1 + |f|`. A KKT-certified solve
    /// continues until its optimality gap is below it; [`STALL_WINDOW`]
    /// steps that together lower `f` by less than it end any solve.
    pub ftol: f64,
    pub kkt_tol: f64,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 2_000,
            ftol: 1e-8,
            kkt_tol: 1e-5,
            armijo_c: 1e-4,
            backtrack: 0.5,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iter > 0
            && self.ftol > 0.0
            && self.kkt_tol > 0.0
            && self.armijo_c > 0.0
            && self.armijo_c < 1.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid solver settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub step: f64,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedPaths {
    /// The `n` chosen paths, best first.
    pub indices: Vec<usize>,
    /// Path weights before rounding.
    pub weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Frank–Wolfe gap at the returned point, an upper bound on `f(x) − f*`.
    pub gap: f64,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

impl SelectedPaths {
    /// Path weights with the selected paths at 1 and the rest at 0.
    pub fn indicator(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.weights.len()];
        for &i in &self.indices {
            x[i] = 1.0;
        }
        x
    }

    /// CSV `iter,objective,step,kkt_residual`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,objective,step,kkt_residual\n");
        for r in &self.trace {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.iter,
                crate::json::format_f64(r.objective),
                crate::json::format_f64(r.step),
                crate::json::format_f64(r.kkt_residual)
            );
        }
        out
    }
}

/// Indices of the `n` largest scores; equal scores keep path order.
pub fn top_n(scores: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(n);
    order
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn kkt_residual(x: &[f64], grad: &[f64], n: f64) -> f64 {
    let stepped: Vec<f64> = x.iter().zip(grad).map(|(a, g)| a - g).collect();
    let p = project_box_capped_simplex(&stepped, n);
    let diff = x.iter().zip(&p).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
    diff / (1.0 + inf_norm(grad))
}

/// `⟨∇f, x⟩` minus the smallest value `⟨∇f, s⟩` takes over the feasible
/// set, which is attained by putting `s` on the `n` smallest partials.
fn optimality_gap(x: &[f64], grad: &[f64], n: usize) -> f64 {
    let mut sorted = grad.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    (crate::numeric::dot(grad, x) - compensated_sum(sorted[..n].iter().copied())).max(0.0)
}

/// Projected gradient descent with Armijo backtracking along the projection
/// arc, started at the barycenter `x = n/m`. Trial steps follow the
/// Barzilai–Borwein rule. Stops once the KKT residual is within tolerance
/// and the optimality gap is below `ftol · (1 + |f|)`.
pub fn solve_convex(problem: &SelectionProblem, n: usize, cfg: &SolverConfig) -> Result<SelectedPaths> {
    cfg.validate()?;
    let m = problem.num_paths();
    check_budget(n, m)?;
    let budget = n as f64;
    let mut x = vec![budget / m as f64; m];
    let mut f = problem.objective(&x);
    let mut grad = problem.gradient(&x);
    let mut kkt = kkt_residual(&x, &grad, budget);
    let mut step = 1.0;
    let mut trace = Vec::new();
    if cfg.record_trace {
        trace.push(TraceRow {
            iter: 0,
            objective: f,
            step: 0.0,
            kkt_residual: kkt,
        });
    }
    let mut iterations = 0;
    let mut history = vec![f];
    let mut gap = optimality_gap(&x, &grad, n);
    // latest iterate that met the KKT tolerance, as (x, kkt, gap)
    let mut certified = None;
    while iterations < cfg.max_iter {
        if kkt <= cfg.kkt_tol {
            certified = Some((x.clone(), kkt, gap));
        }
        if kkt <= cfg.kkt_tol && gap <= cfg.ftol * (1.0 + f.abs()) {
            break;
        }
        iterations += 1;
        let mut alpha = step;
        let probs = softmax(&problem.logits_at(&x));
        let (x_new, change) = loop {
            let trial: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a - alpha * g).collect();
            let cand = project_box_capped_simplex(&trial, budget);
            let moved: Vec<f64> = cand.iter().zip(&x).map(|(c, a)| c - a).collect();
            let decrease = crate::numeric::dot(&grad, &moved);
            let change = problem.objective_change(&probs, &moved);
            if change <= cfg.armijo_c * decrease || alpha < 1e-20 {
                break (cand, change);
            }
            alpha *= cfg.backtrack;
        };
        if change > 0.0 {
            // no descent even at a vanishing step: the iterate is stationary
            break;
        }
        let grad_new = problem.gradient(&x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        step = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { (alpha * 2.0).min(1e10) };
        x = x_new;
        f += change;
        grad = grad_new;
        kkt = kkt_residual(&x, &grad, budget);
        gap = optimality_gap(&x, &grad, n);
        if cfg.record_trace {
            trace.push(TraceRow {
                iter: iterations,
                objective: f,
                step: alpha,
                kkt_residual: kkt,
            });
        }
        history.push(f);
        if history.len() > STALL_WINDOW && history[history.len() - 1 - STALL_WINDOW] - f < cfg.ftol * (1.0 + f.abs()) {
            break;
        }
    }
    if kkt > cfg.kkt_tol {
        if let Some(c) = certified {
            (x, kkt, gap) = c;
        }
    }
    Ok(SelectedPaths {
        indices: top_n(&x, n),
        objective: problem.objective(&x),
        iterations,
        kkt_residual: kkt,
        gap,
        converged: kkt <= cfg.kkt_tol,
        weights: x,
        trace,
    })
}

fn greedy(problem: &SelectionProblem, scores: &[f64], n: usize) -> Result<SelectedPaths> {
    check_budget(n, problem.num_paths())?;
    let indices = top_n(scores, n);
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

/// The convex objective without its log-partition term is linear, so its
/// optimum over the box-capped simplex is the top `n` of `D π1`.
pub fn solve_linear(problem: &SelectionProblem, n: usize) -> Result<SelectedPaths> {
    greedy(problem, &problem.linear_scores(), n)
}

/// Top `n` paths by `D 1`.
pub fn select_topk(problem: &SelectionProblem, n: usize) -> Result<SelectedPaths> {
    greedy(problem, &problem.row_sums(), n)
}
