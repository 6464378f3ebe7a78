//! AUC-ROC, parameter sweeps and setting comparison.

pub mod report;
pub mod roc;
pub mod stats;
pub mod sweep;

pub use report::{
    compare_cells, compare_settings, heatmap_csv, markdown_report, parse_heatmap_csv, summary_json,
    TestResult, HEATMAP_HEADER,
};
pub use roc::{auc_roc, RocResult};
pub use stats::{ks_two_sample, mann_whitney_u, Alternative, KsResult, MannWhitney};
pub use sweep::{
    capture_features, cell_node2vec, cell_seed, evaluate_cell, features_dataset, grid, run_sweep,
    CaptureInput, Cell, Evaluation, Extremum, Setting, Summary, SweepConfig, SweepInput,
    SweepResult,
};
