//! Masquerade attack detection for CAN bus captures.
//!
//! A capture is cut into sliding windows. Each window becomes a message
//! sequence graph (nodes are arbitration IDs, an edge `u -> v` counts how
//! often `v` directly follows `u`), whose nodes are annotated with the mean
//! and standard deviation of their decoded signals. node2vec embeddings of
//! the graph are averaged into a whole-graph vector, concatenated with the
//! signal statistics and fed to a random forest. Sweeps over window size and
//! offset produce AUC-ROC heatmaps which are compared with Mann-Whitney U and
//! Kolmogorov-Smirnov tests.

pub mod can_io;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod learn;
pub mod msg_graph;
pub mod seed;
pub mod synth;
pub mod windowing;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
