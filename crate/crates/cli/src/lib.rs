//! Command-line driver: `ingest`, `train`, `explain` and `evaluate`, all
//! driven by one TOML config file.
//!
//! Exit codes: 0 ok, 1 unexpected I/O failure, 2 configuration, 3 training,
//! 4 target, 5 path capacity.

pub mod config;
pub mod dataset;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use evoxplain::gnn::{load_weights, save_weights, GnnWeights};
use evoxplain::harness::{
    emit_report, explain_target, kl_minus, kl_plus, measure_target, run_comparison, select_targets, Method, ReportOptions,
};
use evoxplain::json::to_canonical_string;
use evoxplain::selection::solve_convex;
use evoxplain::Error;
use serde_json::{json, Value};

pub use config::RunConfig;
pub use dataset::Dataset;

pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;
pub const EXIT_TARGET: i32 = 4;
pub const EXIT_CAPACITY: i32 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn target(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_TARGET,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::TrainingDiverged { .. } => EXIT_TRAINING,
            Error::CapacityExceeded { .. } => EXIT_CAPACITY,
            Error::Io(_) | Error::Json(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "evoxplain", version, about = "Explain how GNN predictions change between graph snapshots")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Caps worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Materialize snapshots and altered edge sets.
    Ingest,
    /// Train the network on the first snapshot and write its weights.
    Train,
    /// Explain one target's prediction change with the convex program.
    Explain(ExplainArgs),
    /// Compare selection methods over every qualifying target.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Node id, `a-b` link or `gK` graph, using the dataset's raw ids.
    #[arg(long)]
    pub target: String,
    /// Number of paths to select.
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    /// Snapshot pair index (node and link targets).
    #[arg(long, default_value_t = 0)]
    pub pair: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Comma-separated subset of convex, linear, topk, gnn_lrp, deeplift_rank, gradient.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
}

/// Loads the config, applies flag overrides, validates it and records the
/// resolved copy in the output directory.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config <path> is required"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Command::Evaluate(EvaluateArgs { methods: Some(list) }) = &cli.command {
        cfg.methods = list.iter().map(|m| m.trim().parse::<Method>()).collect::<evoxplain::Result<_>>()?;
    }
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
    let resolved = cfg.output_dir.join("config.resolved.toml");
    fs::write(&resolved, cfg.to_toml()?).map_err(|e| io_err(&resolved, e))?;
    Ok(cfg)
}

/// Runs a parsed command line inside a worker pool sized by `--workers`.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.workers {
        if k == 0 {
            return Err(CliError::config("--workers must be positive"));
        }
        pool = pool.num_threads(k);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        let cfg = resolve_config(cli)?;
        match &cli.command {
            Command::Ingest => cmd_ingest(&cfg),
            Command::Train => cmd_train(&cfg),
            Command::Explain(args) => cmd_explain(&cfg, args),
            Command::Evaluate(_) => cmd_evaluate(&cfg),
        }
    })
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    fs::write(path, to_canonical_string(value)).map_err(|e| io_err(path, e))
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<(), CliError> {
    let data = Dataset::load(cfg)?;
    let dir = cfg.output_dir.join("ingest");
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    for (i, g) in data.snapshots.iter().enumerate() {
        write_json(&dir.join(format!("snapshot_{i}.json")), &g.to_json())?;
    }
    let pairs: Vec<Value> = data
        .pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let delta: Vec<Value> = p
                .delta_edges()
                .iter()
                .map(|(e, k)| json!([data.raw(e.src), data.raw(e.dst), k.as_str()]))
                .collect();
            json!({ "pair": i, "num_nodes": p.num_nodes(), "delta": delta })
        })
        .collect();
    write_json(&dir.join("pairs.json"), &Value::Array(pairs))?;
    write_json(&dir.join("id_map.json"), &json!(data.id_map.raw_ids()))?;
    println!(
        "ingested {} snapshots, {} pairs, {} labels into {}",
        data.snapshots.len(),
        data.pairs.len(),
        data.labels.len(),
        dir.display()
    );
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let data = Dataset::load(cfg)?;
    let outcome = data.train(&cfg.train_config())?;
    let path = cfg.weights_path();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    save_weights(&outcome.weights, &path)?;
    let final_loss = outcome.loss_history.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} epochs: final loss {final_loss:.6}, accuracy {:.4}; weights written to {}",
        outcome.loss_history.len(),
        outcome.accuracy,
        path.display()
    );
    Ok(())
}

fn load_trained(cfg: &RunConfig, data: &Dataset) -> Result<GnnWeights, CliError> {
    let path = cfg.weights_path();
    if !path.is_file() {
        return Err(CliError::config(format!(
            "weights file {} does not exist; run `train` first",
            path.display()
        )));
    }
    let w = load_weights(&path)?;
    if w.task != cfg.task {
        return Err(CliError::config(format!("weights were trained for the {} task", w.task)));
    }
    if let Some(g) = data.training.first() {
        if g.features().cols() != w.input_dim() {
            return Err(CliError::config("weights do not match the dataset's feature width"));
        }
    }
    Ok(w)
}

fn file_label(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| evoxplain::json::float(*x).unwrap_or(Value::Null)).collect())
}

pub fn cmd_explain(cfg: &RunConfig, args: &ExplainArgs) -> Result<(), CliError> {
    let data = Dataset::load(cfg)?;
    let weights = load_trained(cfg, &data)?;
    let (target, pair) = data.parse_target(&args.target, args.pair)?;
    if pair >= data.pairs.len() {
        return Err(CliError::target(format!("snapshot pair {pair} does not exist")));
    }
    let instance = match measure_target(&data.pairs, pair, &weights, target, cfg.max_paths) {
        Ok(i) => i,
        Err(Error::UnknownNode(v)) => return Err(CliError::target(format!("node {v} does not exist"))),
        Err(e) => return Err(e.into()),
    };
    if instance.base_kl <= cfg.threshold {
        return Err(CliError::target(format!(
            "target {} is below the threshold: KL = {:.3e} <= {:.3e}",
            args.target, instance.base_kl, cfg.threshold
        )));
    }
    let ex = explain_target(&data.pairs, &weights, &instance, cfg.max_paths)?;
    let started = Instant::now();
    let sel = solve_convex(&ex.problem, args.n, &cfg.solver)?;
    let optimization = started.elapsed();
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    log::info!(
        "target {}: m = {}, path search {:.3} ms, attribution {:.3} ms, optimization {:.3} ms",
        args.target,
        ex.instance.m,
        ms(ex.timings.path_search),
        ms(ex.timings.attribution),
        ms(optimization)
    );

    let mut starts = Vec::with_capacity(ex.paths.sets.len());
    for r in 0..ex.paths.sets.len() {
        starts.push(ex.paths.offset(r));
    }
    let selected: Vec<Value> = sel
        .indices
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            let r = starts.partition_point(|&o| o <= i) - 1;
            let p = ex.paths.get(i);
            json!({
                "rank": rank + 1,
                "index": i,
                "root": data.raw(p.root()),
                "nodes": p.nodes.iter().map(|v| data.raw(*v)).collect::<Vec<_>>(),
                "kind": p.kind.as_str(),
                "cut_layer": p.t_bar,
                "x": evoxplain::json::float(sel.weights[i]),
                "contribution": floats(ex.problem.contributions().row(i)),
                "logit_contribution": floats(ex.contributions[r].values.row(i - starts[r])),
            })
        })
        .collect();
    let mut out = json!({
        "target": args.target,
        "task": cfg.task.to_string(),
        "pair": pair,
        "m": ex.instance.m,
        "n": args.n,
        "base_kl": evoxplain::json::float(ex.instance.base_kl),
        "class_g0": ex.class0,
        "class_g1": ex.class1,
        "kl_plus": evoxplain::json::float(kl_plus(&ex.problem, &sel.indices)),
        "kl_minus": evoxplain::json::float(kl_minus(&ex.problem, &sel.indices)),
        "selected": selected,
        "solver": {
            "objective": evoxplain::json::float(sel.objective),
            "iterations": sel.iterations,
            "kkt_residual": evoxplain::json::float(sel.kkt_residual),
            "optimality_gap": evoxplain::json::float(sel.gap),
            "converged": sel.converged,
        },
    });
    if cfg.report.include_timing {
        out["timings_ms"] = json!({
            "path_search": ms(ex.timings.path_search),
            "attribution": ms(ex.timings.attribution),
            "optimization": ms(optimization),
        });
    }
    let path = cfg
        .output_dir
        .join(format!("explain-{}-n{}.json", file_label(&args.target), args.n));
    write_json(&path, &out)?;
    if cfg.solver.record_trace {
        let trace = path.with_extension("trace.csv");
        fs::write(&trace, sel.trace_csv()).map_err(|e| io_err(&trace, e))?;
    }
    println!("explanation written to {}", path.display());
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let data = Dataset::load(cfg)?;
    let weights = load_trained(cfg, &data)?;
    let targets = select_targets(&data.pairs, &weights, cfg.threshold, cfg.max_paths);
    if targets.is_empty() {
        log::warn!("no target exceeds the threshold with more than 10 altered paths; writing an empty report");
    }
    let comparison = evoxplain::harness::ComparisonConfig {
        solver: cfg.solver.clone(),
        max_paths: cfg.max_paths,
    };
    let result = run_comparison(&data.pairs, &weights, &targets, &cfg.methods, &cfg.levels(), &comparison);
    for f in &result.failures {
        log::warn!("{}: {}", f.target, f.message);
    }
    let opts = ReportOptions {
        seed: cfg.seed,
        include_timing: cfg.report.include_timing,
    };
    let dir = cfg.output_dir.join("report");
    let files = emit_report(&result.records, &result.failures, &opts, &dir)?;
    println!(
        "{} targets, {} records, {} failures; report written to {}",
        targets.len(),
        result.records.len(),
        result.failures.len(),
        files.records.parent().unwrap_or(&dir).display()
    );
    Ok(())
}
