//! `(omega, delta)` sweeps: every grid cell runs the whole pipeline and
//! reports one AUC per setting.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::can_io::{decode_signals, AttackInterval, CanFrame, SignalDb};
use crate::embedding::{
    assemble_feature, embed_graph, whole_graph_embedding, Node2VecParams, WindowFeature,
};
use crate::error::{Error, Result};
use crate::eval::roc::auc_roc;
use crate::learn::{cross_validate, smote, Dataset, ForestModel, ForestParams};
use crate::msg_graph::{annotate_nodes, build_msg, canonical_order, SignalTable};
use crate::seed;
use crate::windowing::{label_windows, partition, WindowMode, WindowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    EmbeddingsOnly,
    EmbeddingsPlusTimeseries,
}

impl Setting {
    pub const ALL: [Setting; 2] = [Setting::EmbeddingsOnly, Setting::EmbeddingsPlusTimeseries];

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::EmbeddingsOnly => "embeddings_only",
            Setting::EmbeddingsPlusTimeseries => "embeddings_plus_timeseries",
        }
    }

    pub fn uses_signals(self) -> bool {
        self == Setting::EmbeddingsPlusTimeseries
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "embeddings_only" => Ok(Setting::EmbeddingsOnly),
            "embeddings_plus_timeseries" => Ok(Setting::EmbeddingsPlusTimeseries),
            _ => Err(Error::invalid("setting", s)),
        }
    }
}

/// How a cell's AUC is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evaluation {
    /// Stratified k-fold on the training capture, out-of-fold scores.
    Cv { folds: usize },
    /// Fit on the training capture, score the test capture.
    TrainTest,
}

impl Default for Evaluation {
    fn default() -> Self {
        Evaluation::Cv { folds: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub mode: WindowMode,
    /// Cells in output order.
    pub grid: Vec<(f64, f64)>,
    pub settings: Vec<Setting>,
    pub node2vec: Node2VecParams,
    pub forest: ForestParams,
    pub smote_k: usize,
    pub evaluation: Evaluation,
    pub seed: u64,
    /// Worker threads for cells; 0 means all available cores.
    pub jobs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            mode: WindowMode::Time,
            grid: grid(&[2.0, 4.0, 8.0], &[1.0, 2.0]),
            settings: Setting::ALL.to_vec(),
            node2vec: Node2VecParams::default(),
            forest: ForestParams::default(),
            smote_k: 5,
            evaluation: Evaluation::default(),
            seed: 0,
            jobs: 0,
        }
    }
}

/// Cartesian product, omega-major.
pub fn grid(omegas: &[f64], deltas: &[f64]) -> Vec<(f64, f64)> {
    omegas
        .iter()
        .flat_map(|&o| deltas.iter().map(move |&d| (o, d)))
        .collect()
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::invalid("sweep", "empty grid"));
        }
        if self.settings.is_empty() {
            return Err(Error::invalid("sweep", "no settings"));
        }
        for (i, s) in self.settings.iter().enumerate() {
            if self.settings[..i].contains(s) {
                return Err(Error::invalid("sweep", format!("setting {s} listed twice")));
            }
        }
        for (i, &(o, d)) in self.grid.iter().enumerate() {
            WindowSpec::new(self.mode, o, d)?;
            if self.grid[..i].contains(&(o, d)) {
                return Err(Error::invalid("sweep", format!("cell ({o}, {d}) listed twice")));
            }
        }
        if let Evaluation::Cv { folds } = self.evaluation {
            if folds < 2 {
                return Err(Error::invalid("sweep", "cross-validation needs at least 2 folds"));
            }
        }
        if self.smote_k == 0 {
            return Err(Error::invalid("sweep", "smote_k must be at least 1"));
        }
        self.node2vec.validate()?;
        self.forest.validate()
    }
}

/// One capture prepared for sweeping: frames, decoded signals and ground
/// truth.
#[derive(Debug, Clone)]
pub struct CaptureInput {
    pub frames: Vec<CanFrame>,
    pub table: SignalTable,
    /// `(can_id, signal)` order of the time-series feature block.
    pub canonical: Vec<(u32, String)>,
    pub attacks: Vec<AttackInterval>,
}

impl CaptureInput {
    /// `frames` must be time-sorted (see [`crate::can_io::Capture`]).
    pub fn new(frames: Vec<CanFrame>, db: Option<&SignalDb>, attacks: Vec<AttackInterval>) -> Self {
        let (table, canonical) = match db {
            Some(db) => {
                let decoded = decode_signals(&frames, &db.signals);
                let skipped: usize = decoded.skipped.iter().sum();
                if skipped > 0 {
                    log::warn!("{skipped} signal samples skipped while decoding");
                }
                (SignalTable::new(decoded.series), canonical_order(&db.signals))
            }
            None => (SignalTable::new(Vec::new()), Vec::new()),
        };
        CaptureInput {
            frames,
            table,
            canonical,
            attacks,
        }
    }

    /// Attack name for reports: distinct interval names joined by `+`.
    pub fn attack_name(&self) -> String {
        let mut names: Vec<&str> = self.attacks.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.is_empty() {
            "none".to_string()
        } else {
            names.join("+")
        }
    }
}

/// Training capture and, in train/test mode, the held-out capture.
#[derive(Debug, Clone)]
pub struct SweepInput {
    pub train: CaptureInput,
    pub test: Option<CaptureInput>,
}

impl SweepInput {
    pub fn validate(&self, config: &SweepConfig) -> Result<()> {
        config.validate()?;
        let needs_signals = config.settings.iter().any(|s| s.uses_signals());
        let captures = std::iter::once(&self.train).chain(self.test.as_ref());
        for c in captures {
            if needs_signals && c.canonical.is_empty() {
                return Err(Error::invalid(
                    "sweep",
                    "setting embeddings_plus_timeseries needs a signal database with at least one signal",
                ));
            }
        }
        match (config.evaluation, &self.test) {
            (Evaluation::TrainTest, None) => Err(Error::invalid("sweep", "train/test evaluation needs a test capture")),
            (Evaluation::Cv { .. }, Some(_)) => Err(Error::invalid("sweep", "cross-validation takes a single capture")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub omega: f64,
    pub delta: f64,
    /// NaN for an invalid cell (`null` in JSON).
    #[serde(with = "nan_as_null")]
    pub auc: f64,
    /// Why the cell is invalid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub value: f64,
    pub omega: f64,
    pub delta: f64,
}

/// Summary over the valid cells. `sigma` is the population standard
/// deviation; ties for min and max go to the first cell in grid order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mu: f64,
    pub sigma: f64,
    pub median: f64,
    pub min: Extremum,
    pub max: Extremum,
    pub valid_cells: usize,
}

impl Summary {
    /// `None` when every cell is NaN.
    pub fn from_cells(cells: &[Cell]) -> Option<Summary> {
        let valid: Vec<&Cell> = cells.iter().filter(|c| !c.auc.is_nan()).collect();
        if valid.is_empty() {
            return None;
        }
        let n = valid.len() as f64;
        let mu = valid.iter().map(|c| c.auc).sum::<f64>() / n;
        let sigma = (valid.iter().map(|c| (c.auc - mu).powi(2)).sum::<f64>() / n).sqrt();
        let mut sorted: Vec<f64> = valid.iter().map(|c| c.auc).collect();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        let median = if m % 2 == 1 {
            sorted[m / 2]
        } else {
            (sorted[m / 2 - 1] + sorted[m / 2]) / 2.0
        };
        let ext = |c: &Cell| Extremum {
            value: c.auc,
            omega: c.omega,
            delta: c.delta,
        };
        let mut min = valid[0];
        let mut max = valid[0];
        for c in &valid[1..] {
            if c.auc < min.auc {
                min = c;
            }
            if c.auc > max.auc {
                max = c;
            }
        }
        Some(Summary {
            mu,
            sigma,
            median,
            min: ext(min),
            max: ext(max),
            valid_cells: valid.len(),
        })
    }
}

/// One heatmap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub attack: String,
    pub setting: Setting,
    pub mode: WindowMode,
    pub cells: Vec<Cell>,
    pub summary: Option<Summary>,
}

impl SweepResult {
    pub fn new(attack: String, setting: Setting, mode: WindowMode, cells: Vec<Cell>) -> Self {
        let summary = Summary::from_cells(&cells);
        SweepResult {
            attack,
            setting,
            mode,
            cells,
            summary,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.auc).collect()
    }
}

/// Seed of the cell `(omega, delta)` under `master`.
pub fn cell_seed(master: u64, omega: f64, delta: f64) -> u64 {
    seed::derive(
        seed::derive(seed::derive(master, seed::STREAM_CELL), omega.to_bits()),
        delta.to_bits(),
    )
}

/// Window features of one capture for every requested setting, outer index
/// following `settings`. The graph embedding is computed once per window and
/// shared by the settings.
pub fn capture_features(
    capture: &CaptureInput,
    spec: &WindowSpec,
    settings: &[Setting],
    n2v: &Node2VecParams,
) -> Result<Vec<Vec<WindowFeature>>> {
    let mut windows = partition(&capture.frames, spec)?;
    if windows.is_empty() {
        return Err(Error::Insufficient(format!(
            "capture too short for window size {}",
            spec.omega
        )));
    }
    label_windows(&mut windows, &capture.attacks);
    let annotate = settings.iter().any(|s| s.uses_signals());
    let mut out: Vec<Vec<WindowFeature>> = vec![Vec::with_capacity(windows.len()); settings.len()];
    for w in &windows {
        let mut g = build_msg(w);
        if annotate {
            annotate_nodes(&mut g, &capture.table, w);
        }
        let emb = if g.is_empty() {
            vec![0.0; n2v.dimensions]
        } else {
            whole_graph_embedding(&embed_graph(&g, n2v)).0
        };
        for (s, table) in settings.iter().zip(out.iter_mut()) {
            let canonical: &[(u32, String)] = if s.uses_signals() { &capture.canonical } else { &[] };
            table.push(assemble_feature(w.index, w.label, emb.clone(), &g.annotations, canonical));
        }
    }
    Ok(out)
}

/// Feature rows of a table as a dataset.
pub fn features_dataset(features: &[WindowFeature]) -> Result<Dataset> {
    let labels = features.iter().map(|f| f.label.is_attack()).collect();
    Dataset::new(features.iter().map(WindowFeature::values).collect(), labels)
}

fn capture_datasets(
    capture: &CaptureInput,
    spec: &WindowSpec,
    settings: &[Setting],
    n2v: &Node2VecParams,
) -> Result<Vec<Dataset>> {
    capture_features(capture, spec, settings, n2v)?
        .iter()
        .map(|t| features_dataset(t))
        .collect()
}

/// node2vec parameters used inside the cell `(omega, delta)`.
pub fn cell_node2vec(config: &SweepConfig, omega: f64, delta: f64) -> Node2VecParams {
    Node2VecParams {
        seed: seed::derive(cell_seed(config.seed, omega, delta), config.node2vec.seed),
        ..config.node2vec.clone()
    }
}

/// Scores and labels of one evaluation.
fn score(
    train: &Dataset,
    test: Option<&Dataset>,
    config: &SweepConfig,
    cell_seed: u64,
) -> Result<(Vec<f64>, Vec<bool>)> {
    train.require_both_classes()?;
    let forest = ForestParams {
        seed: seed::derive(cell_seed, seed::STREAM_TREE),
        ..config.forest.clone()
    };
    match (config.evaluation, test) {
        (Evaluation::Cv { folds }, _) => {
            let report = cross_validate(
                train,
                folds,
                &forest,
                config.smote_k,
                seed::derive(cell_seed, seed::STREAM_FOLD),
            )?;
            Ok((report.scores, train.labels().to_vec()))
        }
        (Evaluation::TrainTest, Some(test)) => {
            test.require_both_classes()?;
            let balanced = smote(train, config.smote_k, seed::derive(cell_seed, seed::STREAM_SMOTE))?;
            let model = ForestModel::train(&balanced.dataset, &forest)?;
            Ok((model.predict_dataset(test)?, test.labels().to_vec()))
        }
        (Evaluation::TrainTest, None) => Err(Error::invalid("sweep", "train/test evaluation needs a test capture")),
    }
}

/// AUC of every configured setting at one `(omega, delta)`, in
/// `config.settings` order.
pub fn evaluate_cell(input: &SweepInput, config: &SweepConfig, omega: f64, delta: f64) -> Result<Vec<f64>> {
    let spec = WindowSpec::new(config.mode, omega, delta)?;
    let cseed = cell_seed(config.seed, omega, delta);
    let n2v = cell_node2vec(config, omega, delta);
    let train = capture_datasets(&input.train, &spec, &config.settings, &n2v)?;
    let test = match &input.test {
        Some(t) => Some(capture_datasets(t, &spec, &config.settings, &n2v)?),
        None => None,
    };
    let mut aucs = Vec::with_capacity(config.settings.len());
    for (i, tr) in train.iter().enumerate() {
        let (scores, labels) = score(tr, test.as_ref().map(|t| &t[i]), config, cseed)?;
        aucs.push(auc_roc(&scores, &labels)?.auc);
    }
    Ok(aucs)
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".to_string()
    }
}

/// Run every cell on a pool of `config.jobs` threads. A cell that fails or
/// panics becomes NaN in every setting, with the reason in its note; results
/// are in grid order whatever the thread count. Returns one result per
/// setting.
pub fn run_sweep(input: &SweepInput, config: &SweepConfig) -> Result<Vec<SweepResult>> {
    input.validate(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::invalid("jobs", e.to_string()))?;
    let outcomes: Vec<std::result::Result<Vec<f64>, String>> = pool.install(|| {
        config
            .grid
            .par_iter()
            .map(|&(o, d)| {
                match catch_unwind(AssertUnwindSafe(|| evaluate_cell(input, config, o, d))) {
                    Ok(Ok(aucs)) => Ok(aucs),
                    Ok(Err(e)) => Err(e.to_string()),
                    Err(p) => Err(format!("panic: {}", panic_message(p.as_ref()))),
                }
            })
            .collect()
    });
    let attack = input.train.attack_name();
    let mut results = Vec::with_capacity(config.settings.len());
    for (si, &setting) in config.settings.iter().enumerate() {
        let cells = config
            .grid
            .iter()
            .zip(&outcomes)
            .map(|(&(omega, delta), out)| match out {
                Ok(aucs) => Cell {
                    omega,
                    delta,
                    auc: aucs[si],
                    note: None,
                },
                Err(reason) => Cell {
                    omega,
                    delta,
                    auc: f64::NAN,
                    note: Some(reason.clone()),
                },
            })
            .collect();
        results.push(SweepResult::new(attack.clone(), setting, config.mode, cells));
    }
    for (&(o, d), out) in config.grid.iter().zip(&outcomes) {
        if let Err(reason) = out {
            log::warn!("cell ({o}, {d}) invalid: {reason}");
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(omega: f64, delta: f64, auc: f64) -> Cell {
        Cell {
            omega,
            delta,
            auc,
            note: None,
        }
    }

    #[test]
    fn grid_is_omega_major() {
        assert_eq!(
            grid(&[2.0, 3.0], &[1.0, 2.0]),
            vec![(2.0, 1.0), (2.0, 2.0), (3.0, 1.0), (3.0, 2.0)]
        );
    }

    #[test]
    fn summary_skips_nan_and_keeps_first_extremum() {
        let cells = vec![
            cell(2.0, 1.0, 0.8),
            cell(2.0, 2.0, f64::NAN),
            cell(3.0, 1.0, 0.9),
            cell(3.0, 2.0, 0.7),
            cell(4.0, 1.0, 0.9),
        ];
        let s = Summary::from_cells(&cells).unwrap();
        assert_eq!(s.valid_cells, 4);
        assert!((s.mu - 0.825).abs() < 1e-12);
        assert!((s.median - 0.85).abs() < 1e-12);
        let var: f64 = [0.8f64, 0.9, 0.7, 0.9].iter().map(|v| (v - 0.825).powi(2)).sum::<f64>() / 4.0;
        assert!((s.sigma - var.sqrt()).abs() < 1e-12);
        assert_eq!((s.max.omega, s.max.delta), (3.0, 1.0));
        assert_eq!((s.min.value, s.min.omega), (0.7, 3.0));
        assert!(Summary::from_cells(&[cell(1.0, 1.0, f64::NAN)]).is_none());
    }

    #[test]
    fn config_validation() {
        let ok = SweepConfig::default();
        assert!(ok.validate().is_ok());
        assert!(SweepConfig { grid: vec![], ..ok.clone() }.validate().is_err());
        assert!(SweepConfig { grid: vec![(2.0, 0.0)], ..ok.clone() }.validate().is_err());
        assert!(SweepConfig { grid: vec![(2.0, 1.0), (2.0, 1.0)], ..ok.clone() }.validate().is_err());
        assert!(SweepConfig { evaluation: Evaluation::Cv { folds: 1 }, ..ok.clone() }.validate().is_err());
        let dup = vec![Setting::EmbeddingsOnly, Setting::EmbeddingsOnly];
        assert!(SweepConfig { settings: dup, ..ok }.validate().is_err());
    }

    #[test]
    fn nan_cells_survive_json() {
        let r = SweepResult::new(
            "a".into(),
            Setting::EmbeddingsOnly,
            WindowMode::Time,
            vec![cell(2.0, 1.0, f64::NAN), cell(2.0, 2.0, 0.5)],
        );
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"auc\":null"));
        let back: SweepResult = serde_json::from_str(&text).unwrap();
        assert!(back.cells[0].auc.is_nan());
        assert_eq!(back.cells[1], r.cells[1]);
        assert_eq!(back.summary, r.summary);
    }

    #[test]
    fn setting_names_round_trip() {
        for s in Setting::ALL {
            assert_eq!(s.as_str().parse::<Setting>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{s}\""));
        }
    }

    #[test]
    fn combined_setting_needs_signals() {
        let input = SweepInput {
            train: CaptureInput::new(Vec::new(), None, Vec::new()),
            test: None,
        };
        let err = input.validate(&SweepConfig::default()).unwrap_err();
        assert!(err.to_string().contains("signal database"));
    }
}
