//! Message sequence graphs.
//!
//! One graph per window: nodes are the arbitration IDs seen in the window and
//! the weight of `u -> v` counts how many times a frame with ID `v` directly
//! follows a frame with ID `u`. Nodes carry `(mean, std)` of each of their
//! decoded signals over the window.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::can_io::{SignalDef, SignalSeries};
use crate::windowing::{Label, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalStat {
    pub name: String,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsgGraph {
    pub window_index: usize,
    pub label: Label,
    pub nodes: BTreeSet<u32>,
    pub edges: BTreeMap<(u32, u32), u64>,
    /// Per-node signal statistics in canonical signal order.
    pub annotations: BTreeMap<u32, Vec<SignalStat>>,
    /// Signals that had no sample at or before the window.
    pub coverage_warnings: Vec<String>,
}

impl MsgGraph {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.values().sum()
    }

    pub fn weight(&self, from: u32, to: u32) -> u64 {
        self.edges.get(&(from, to)).copied().unwrap_or(0)
    }

    /// Debug dump: one `u v weight` line per edge, IDs in hex.
    pub fn edge_list(&self) -> String {
        let mut out = String::new();
        for (&(u, v), w) in &self.edges {
            let _ = writeln!(out, "{u:X} {v:X} {w}");
        }
        out
    }

    /// Sidecar JSON for [`MsgGraph::edge_list`].
    pub fn annotation_json(&self) -> serde_json::Value {
        let nodes: BTreeMap<String, &Vec<SignalStat>> = self
            .nodes
            .iter()
            .map(|n| {
                static EMPTY: Vec<SignalStat> = Vec::new();
                (format!("{n:X}"), self.annotations.get(n).unwrap_or(&EMPTY))
            })
            .collect();
        serde_json::json!({
            "window_index": self.window_index,
            "label": self.label,
            "nodes": nodes,
        })
    }
}

/// Build the graph of one window by counting consecutive ID pairs.
pub fn build_msg(window: &Window<'_>) -> MsgGraph {
    let mut nodes = BTreeSet::new();
    let mut edges = BTreeMap::new();
    let mut prev: Option<u32> = None;
    for f in window.frames {
        nodes.insert(f.id);
        if let Some(p) = prev {
            *edges.entry((p, f.id)).or_insert(0u64) += 1;
        }
        prev = Some(f.id);
    }
    if nodes.is_empty() {
        debug!("window {} has no frames", window.index);
    }
    MsgGraph {
        window_index: window.index,
        label: window.label,
        nodes,
        edges,
        annotations: BTreeMap::new(),
        coverage_warnings: Vec::new(),
    }
}

/// Decoded signals indexed by arbitration ID, in canonical (database) order.
#[derive(Debug, Clone, Default)]
pub struct SignalTable {
    pub series: Vec<SignalSeries>,
    by_id: HashMap<u32, Vec<usize>>,
}

impl SignalTable {
    pub fn new(series: Vec<SignalSeries>) -> Self {
        let mut by_id: HashMap<u32, Vec<usize>> = HashMap::new();
        for (i, s) in series.iter().enumerate() {
            by_id.entry(s.can_id).or_default().push(i);
        }
        SignalTable { series, by_id }
    }

    pub fn for_id(&self, id: u32) -> impl Iterator<Item = &SignalSeries> {
        self.by_id
            .get(&id)
            .into_iter()
            .flatten()
            .map(|&i| &self.series[i])
    }

    /// `(can_id, name)` of every signal in canonical order.
    pub fn canonical_order(&self) -> Vec<(u32, String)> {
        self.series
            .iter()
            .map(|s| (s.can_id, s.name.clone()))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

/// Canonical order straight from a signal database.
pub fn canonical_order(defs: &[SignalDef]) -> Vec<(u32, String)> {
    defs.iter().map(|d| (d.can_id, d.name.clone())).collect()
}

/// Window statistics of one signal and whether coverage was missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStat {
    pub mu: f64,
    pub sigma: f64,
    pub uncovered: bool,
}

/// Attach `(mu, sigma)` of every signal to its node.
pub fn annotate_nodes(graph: &mut MsgGraph, table: &SignalTable, window: &Window<'_>) {
    let (start, end) = (window.time_start, window.time_end);
    for &node in &graph.nodes {
        let mut stats = Vec::new();
        for s in table.for_id(node) {
            let st = signal_window_stat(s, start, end);
            if st.uncovered {
                graph
                    .coverage_warnings
                    .push(format!("{:X}/{}", s.can_id, s.name));
            }
            stats.push(SignalStat {
                name: s.name.clone(),
                mu: st.mu,
                sigma: st.sigma,
            });
        }
        graph.annotations.insert(node, stats);
    }
}

/// Statistics of a signal over `[start, end)`.
///
/// The series is linearly interpolated onto a uniform grid starting at
/// `start` whose step is the median inter-sample spacing inside the window,
/// clamped to `[w/1000, w]` for window length `w`. With no sample inside the
/// window the last earlier value is held (sigma = 0); with no earlier sample
/// either the result is `(0, 0)` flagged as uncovered.
pub fn signal_window_stat(series: &SignalSeries, start: f64, end: f64) -> WindowStat {
    let t = &series.times;
    let lo = t.partition_point(|&x| x < start);
    let hi = t.partition_point(|&x| x < end);
    if lo == hi {
        return match lo.checked_sub(1) {
            Some(i) => WindowStat {
                mu: series.values[i],
                sigma: 0.0,
                uncovered: false,
            },
            None => WindowStat {
                mu: 0.0,
                sigma: 0.0,
                uncovered: true,
            },
        };
    }
    let width = end - start;
    let step = if hi - lo >= 2 {
        let mut gaps: Vec<f64> = t[lo..hi].windows(2).map(|w| w[1] - w[0]).collect();
        median_in_place(&mut gaps)
    } else {
        width
    };
    let step = if width > 0.0 {
        step.clamp(width / 1000.0, width)
    } else {
        1.0
    };
    let (mu, sigma) = interpolated_stats(series, start, end, step);
    WindowStat {
        mu,
        sigma,
        uncovered: false,
    }
}

/// Population mean and standard deviation of the series sampled at
/// `start, start + step, ...` strictly below `end` (at least one point).
pub fn interpolated_stats(series: &SignalSeries, start: f64, end: f64, step: f64) -> (f64, f64) {
    let n = (((end - start) / step) - 1e-9).ceil().max(1.0) as usize;
    let mut values = Vec::with_capacity(n);
    let mut cursor = 0;
    for k in 0..n {
        let g = start + k as f64 * step;
        values.push(interpolate_at(series, g, &mut cursor));
    }
    mean_std(&values)
}

/// Linear interpolation with constant extension beyond the first and last
/// samples. `cursor` carries the search position between increasing queries.
fn interpolate_at(series: &SignalSeries, at: f64, cursor: &mut usize) -> f64 {
    let t = &series.times;
    let v = &series.values;
    if t.is_empty() {
        return 0.0;
    }
    while *cursor < t.len() && t[*cursor] <= at {
        *cursor += 1;
    }
    let i = *cursor;
    if i == 0 {
        v[0]
    } else if i == t.len() {
        v[i - 1]
    } else {
        let (t0, t1) = (t[i - 1], t[i]);
        let frac = (at - t0) / (t1 - t0);
        v[i - 1] + frac * (v[i] - v[i - 1])
    }
}

/// Two-pass population mean and standard deviation. The mean is accumulated
/// relative to the first value so a constant input gives sigma = 0 exactly.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let Some(&first) = values.first() else {
        return (0.0, 0.0);
    };
    let n = values.len() as f64;
    let mu = first + values.iter().map(|x| x - first).sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    (mu, var.sqrt())
}

fn median_in_place(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
