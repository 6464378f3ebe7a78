//! Command-line surface. Every flag overrides the matching config-file value.

use std::path::PathBuf;

use canmsg::eval::{Evaluation, Setting};
use canmsg::windowing::WindowMode;
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use crate::config::{InputPaths, RunConfig, SynthSource};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "canmsg",
    version,
    about = "Message-sequence-graph detection of CAN masquerade attacks"
)]
pub struct Cli {
    /// TOML run configuration; flags win over its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Master seed. For `synth` it replaces the scenario's generator seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for sweep cells (0 = all cores). Output does not
    /// depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// More log output (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic capture, signal database and attack metadata.
    Synth(SynthArgs),
    /// Decode signals to CSV `timestamp,can_id,signal,value`.
    Decode(DecodeArgs),
    /// List the windows of one (omega, delta) with their labels.
    Windows(WindowsArgs),
    /// Dump the message sequence graph of every window.
    Graphs(GraphsArgs),
    /// Write per-window feature tables, one per setting.
    Embed(EmbedArgs),
    /// Fit a random forest (after SMOTE) on a feature table.
    Train(TrainArgs),
    /// AUC-ROC of a saved model, or of cross-validation, on a feature table.
    Evaluate(EvaluateArgs),
    /// AUC-ROC heatmaps over a grid of window sizes and offsets.
    Sweep(SweepArgs),
    /// Mann-Whitney U and Kolmogorov-Smirnov tests between two heatmaps.
    Compare(CompareArgs),
    /// Markdown summary and test tables from sweep results.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario file (.toml or .json). Defaults to the built-in scenario.
    #[arg(long, value_name = "FILE")]
    pub scenario: Option<PathBuf>,
    /// Directory for capture.log, signals.json, metadata.json and manifest.json.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

/// Data source: capture files or an in-memory synthetic scenario.
#[derive(Debug, Default, Args)]
pub struct InputArgs {
    /// candump capture.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["scenario", "synth"])]
    pub capture: Option<PathBuf>,
    /// Signal database JSON.
    #[arg(long, value_name = "FILE", requires = "capture")]
    pub signals: Option<PathBuf>,
    /// Attack metadata JSON.
    #[arg(long, value_name = "FILE", requires = "capture")]
    pub metadata: Option<PathBuf>,
    /// Held-out capture for train/test evaluation.
    #[arg(long, value_name = "FILE", requires = "capture")]
    pub test_capture: Option<PathBuf>,
    /// Attack metadata of the held-out capture.
    #[arg(long, value_name = "FILE", requires = "test_capture")]
    pub test_metadata: Option<PathBuf>,
    /// Generate the data from this scenario file instead of reading a capture.
    #[arg(long, value_name = "FILE", conflicts_with = "synth")]
    pub scenario: Option<PathBuf>,
    /// Generate the data from the built-in scenario.
    #[arg(long)]
    pub synth: bool,
}

#[derive(Debug, Default, Args)]
pub struct WindowArgs {
    /// Window unit.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Window size (seconds or messages).
    #[arg(long)]
    pub omega: Option<f64>,
    /// Window offset (seconds or messages).
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Time,
    Sample,
}

#[derive(Debug, Default, Args)]
pub struct GridArgs {
    /// Window sizes of the grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub omegas: Option<Vec<f64>>,
    /// Window offsets of the grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
    /// Explicit grid cell `OMEGA,DELTA`; repeatable, wins over --omegas/--deltas.
    #[arg(long = "cell", value_name = "OMEGA,DELTA", value_parser = parse_cell)]
    pub cells: Vec<(f64, f64)>,
}

#[derive(Debug, Default, Args)]
pub struct EmbedParams {
    /// Detection settings, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_setting)]
    pub settings: Option<Vec<Setting>>,
    /// Embedding dimension d.
    #[arg(long)]
    pub dimensions: Option<usize>,
    /// Walk length l.
    #[arg(long)]
    pub walk_length: Option<usize>,
    /// Walks per node r.
    #[arg(long)]
    pub walks_per_node: Option<usize>,
    /// node2vec return parameter.
    #[arg(long)]
    pub p: Option<f64>,
    /// node2vec in-out parameter.
    #[arg(long)]
    pub q: Option<f64>,
}

#[derive(Debug, Default, Args)]
pub struct ForestArgs {
    /// Trees in the forest.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Maximum tree depth.
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// SMOTE nearest neighbours.
    #[arg(long)]
    pub smote_k: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct EvaluationArgs {
    /// How cell AUCs are measured.
    #[arg(long, value_enum)]
    pub evaluation: Option<EvalArg>,
    /// Folds for cross-validation.
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EvalArg {
    Cv,
    TrainTest,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Output file (default stdout).
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WindowsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Output file (default stdout).
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GraphsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Directory for window_NNNNN.edges / .json.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub embed: EmbedParams,
    /// Directory for features_<setting>.csv.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature table written by `embed`.
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,
    /// Model JSON to write.
    #[arg(long, value_name = "FILE")]
    pub model_out: PathBuf,
    #[command(flatten)]
    pub forest: ForestArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Feature table written by `embed`.
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,
    /// Score with this model; without it, cross-validate.
    #[arg(long, value_name = "FILE", conflicts_with = "folds")]
    pub model: Option<PathBuf>,
    /// Folds for cross-validation.
    #[arg(long)]
    pub folds: Option<usize>,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// JSON output file (default stdout).
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub embed: EmbedParams,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[command(flatten)]
    pub evaluation: EvaluationArgs,
    /// Directory for heatmaps, summaries, sweep.json and manifest.json.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Baseline heatmap CSV (embeddings only).
    pub baseline: PathBuf,
    /// Candidate heatmap CSV (embeddings plus time series), tested for
    /// higher AUC.
    pub candidate: PathBuf,
    /// Attack name recorded in the result.
    #[arg(long, default_value = "unnamed")]
    pub attack: String,
    /// Write the result JSON here.
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Print JSON instead of the table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// sweep.json files.
    #[arg(required = true)]
    pub sweeps: Vec<PathBuf>,
    /// Markdown output file (default stdout).
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

fn parse_cell(s: &str) -> Result<(f64, f64), String> {
    let (o, d) = s.split_once(',').ok_or("expected OMEGA,DELTA")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v}: {e}"));
    Ok((num(o)?, num(d)?))
}

fn parse_setting(s: &str) -> Result<Setting, String> {
    s.parse().map_err(|e: canmsg::Error| e.to_string())
}

impl Cli {
    /// Load the config file (if any) and apply the global flags.
    pub fn base_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if self.jobs.is_some() {
            cfg.jobs = self.jobs;
        }
        Ok(cfg)
    }
}

impl InputArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(capture) = &self.capture {
            cfg.synth = None;
            cfg.input = Some(InputPaths {
                capture: capture.clone(),
                signals: self.signals.clone(),
                metadata: self.metadata.clone(),
                test_capture: self.test_capture.clone(),
                test_metadata: self.test_metadata.clone(),
            });
        } else if self.scenario.is_some() || self.synth {
            cfg.input = None;
            cfg.synth = Some(SynthSource {
                scenario: self.scenario.clone(),
            });
        }
    }
}

impl WindowArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(m) = self.mode {
            cfg.window.mode = Some(match m {
                ModeArg::Time => WindowMode::Time,
                ModeArg::Sample => WindowMode::Sample,
            });
        }
        set(&mut cfg.window.omega, self.omega);
        set(&mut cfg.window.delta, self.delta);
    }
}

impl GridArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if self.omegas.is_some() {
            cfg.window.omegas = self.omegas.clone();
        }
        if self.deltas.is_some() {
            cfg.window.deltas = self.deltas.clone();
        }
        if !self.cells.is_empty() {
            cfg.window.cells = Some(self.cells.clone());
        }
    }
}

impl EmbedParams {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if self.settings.is_some() {
            cfg.settings = self.settings.clone();
        }
        let n = &mut cfg.node2vec;
        n.dimensions = self.dimensions.unwrap_or(n.dimensions);
        n.walk_length = self.walk_length.unwrap_or(n.walk_length);
        n.walks_per_node = self.walks_per_node.unwrap_or(n.walks_per_node);
        n.p = self.p.unwrap_or(n.p);
        n.q = self.q.unwrap_or(n.q);
    }
}

impl ForestArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        cfg.forest.trees = self.trees.unwrap_or(cfg.forest.trees);
        cfg.forest.max_depth = self.max_depth.unwrap_or(cfg.forest.max_depth);
        set(&mut cfg.smote_k, self.smote_k);
    }
}

impl EvaluationArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let current = cfg.evaluation.unwrap_or_default();
        let folds = match current {
            Evaluation::Cv { folds } => folds,
            Evaluation::TrainTest => 5,
        };
        let folds = self.folds.unwrap_or(folds);
        let kind = match (self.evaluation, current) {
            (Some(EvalArg::TrainTest), _) => Evaluation::TrainTest,
            (Some(EvalArg::Cv), _) => Evaluation::Cv { folds },
            (None, Evaluation::Cv { .. }) => Evaluation::Cv { folds },
            (None, Evaluation::TrainTest) => Evaluation::TrainTest,
        };
        if self.evaluation.is_some() || self.folds.is_some() {
            cfg.evaluation = Some(kind);
        }
    }
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}
