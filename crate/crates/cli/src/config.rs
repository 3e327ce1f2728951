//! TOML run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use evoxplain::gnn::TrainConfig;
use evoxplain::harness::{ComplexityLevels, Evolution, Method, SyntheticConfig, DEFAULT_THRESHOLD};
use evoxplain::paths::DEFAULT_MAX_PATHS;
use evoxplain::selection::SolverConfig;
use evoxplain::Task;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/weights.json`.
    #[serde(default)]
    pub weights: Option<PathBuf>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_max_paths")]
    pub max_paths: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub files: Option<FilesDataset>,
    #[serde(default)]
    pub synthetic: Option<SyntheticDataset>,
    #[serde(default)]
    pub gnn: GnnSection,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Defaults to the standard table for `task`.
    #[serde(default)]
    pub levels: Option<ComplexityLevels>,
    #[serde(default)]
    pub report: ReportSection,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_max_paths() -> usize {
    DEFAULT_MAX_PATHS
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn yes() -> bool {
    true
}

/// Timestamped edge list, feature matrix and labels. Consecutive windows
/// form the snapshot pairs; the first window is the training snapshot
/// (graph tasks train on every window, labeled by window index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilesDataset {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    /// `[t_initial, t_end]` pairs, inclusive.
    pub windows: Vec<[i64; 2]>,
    #[serde(default)]
    pub directed: bool,
    #[serde(default = "yes")]
    pub self_loops: bool,
}

/// Generator settings; the task and seed come from the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticDataset {
    pub evolution: Evolution,
    pub num_nodes: usize,
    pub num_blocks: usize,
    pub feature_dim: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub churn: f64,
    pub num_graphs: usize,
    pub graph_size: usize,
    pub graph_edits: usize,
}

impl Default for SyntheticDataset {
    fn default() -> Self {
        let d = SyntheticConfig::default();
        Self {
            evolution: d.evolution,
            num_nodes: d.num_nodes,
            num_blocks: d.num_blocks,
            feature_dim: d.feature_dim,
            p_in: d.p_in,
            p_out: d.p_out,
            churn: d.churn,
            num_graphs: d.num_graphs,
            graph_size: d.graph_size,
            graph_edits: d.graph_edits,
        }
    }
}

impl SyntheticDataset {
    pub fn resolve(&self, task: Task, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            task,
            evolution: self.evolution,
            num_nodes: self.num_nodes,
            num_blocks: self.num_blocks,
            feature_dim: self.feature_dim,
            p_in: self.p_in,
            p_out: self.p_out,
            churn: self.churn,
            num_graphs: self.num_graphs,
            graph_size: self.graph_size,
            graph_edits: self.graph_edits,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnSection {
    pub layers: usize,
    pub hidden: usize,
    pub lr: f64,
    pub dropout: f64,
    pub epochs: usize,
    /// Ignored for link tasks and synthetic datasets.
    pub num_classes: usize,
}

impl Default for GnnSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            layers: d.layers,
            hidden: d.hidden,
            lr: d.lr,
            dropout: d.dropout,
            epochs: d.epochs,
            num_classes: d.num_classes,
        }
    }
}

impl GnnSection {
    pub fn resolve(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            dropout: self.dropout,
            hidden: self.hidden,
            layers: self.layers,
            num_classes: self.num_classes,
            seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Write measured wall times into reports (breaks byte-identical reruns).
    pub include_timing: bool,
}

impl RunConfig {
    /// Reads and validates a config file; relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.output_dir);
        if let Some(w) = &mut self.weights {
            join(w);
        }
        if let Some(f) = &mut self.files {
            join(&mut f.edges);
            join(&mut f.features);
            join(&mut f.labels);
        }
    }

    pub fn weights_path(&self) -> PathBuf {
        self.weights.clone().unwrap_or_else(|| self.output_dir.join("weights.json"))
    }

    pub fn levels(&self) -> ComplexityLevels {
        self.levels.clone().unwrap_or_else(|| ComplexityLevels::for_task(self.task))
    }

    pub fn train_config(&self) -> TrainConfig {
        self.gnn.resolve(self.seed)
    }

    /// Checks every setting and that every referenced input file exists.
    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.files, &self.synthetic) {
            (Some(_), Some(_)) => return Err(CliError::config("give either [files] or [synthetic], not both")),
            (None, None) => return Err(CliError::config("a [files] or [synthetic] dataset section is required")),
            _ => {}
        }
        if let Some(f) = &self.files {
            for p in [&f.edges, &f.features, &f.labels] {
                if !p.is_file() {
                    return Err(CliError::config(format!("input file {} does not exist", p.display())));
                }
            }
            if f.windows.len() < 2 {
                return Err(CliError::config("at least two snapshot windows are required"));
            }
            if let Some(w) = f.windows.iter().find(|w| w[0] > w[1]) {
                return Err(CliError::config(format!("invalid snapshot window [{}, {}]", w[0], w[1])));
            }
        }
        if let Some(s) = &self.synthetic {
            s.resolve(self.task, self.seed).validate()?;
        }
        if !(self.threshold >= 0.0) {
            return Err(CliError::config("threshold must be a non-negative number"));
        }
        if self.max_paths == 0 {
            return Err(CliError::config("max_paths must be positive"));
        }
        if self.methods.is_empty() {
            return Err(CliError::config("no methods selected"));
        }
        self.train_config().validate()?;
        self.solver.validate()?;
        self.levels().validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::config(format!("cannot serialize config: {e}")))
    }
}
