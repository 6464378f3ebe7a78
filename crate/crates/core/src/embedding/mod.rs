//! node2vec graph embeddings and window feature assembly.

mod alias;
mod skipgram;
mod walk;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use alias::AliasTable;
pub use skipgram::train_skipgram;
pub use walk::{
    generate_walks, transition_distribution, transition_distribution_by_id, IndexedGraph, Walker,
};

use crate::error::{Error, Result};
use crate::msg_graph::{MsgGraph, SignalStat};
use crate::seed;
use crate::windowing::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Node2VecParams {
    pub dimensions: usize,
    pub walk_length: usize,
    pub walks_per_node: usize,
    /// Return parameter.
    pub p: f64,
    /// In-out parameter.
    pub q: f64,
    pub context_window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Master seed. Window `k` walks and trains with streams derived from
    /// `(seed, k)`.
    pub seed: u64,
}

impl Default for Node2VecParams {
    fn default() -> Self {
        Node2VecParams {
            dimensions: 64,
            walk_length: 15,
            walks_per_node: 100,
            p: 1.5,
            q: 0.5,
            context_window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

impl Node2VecParams {
    pub fn validate(&self) -> Result<()> {
        let what = "node2vec parameters";
        if self.dimensions == 0 || self.walk_length == 0 || self.walks_per_node == 0 {
            return Err(Error::invalid(what, "d, l and r must be at least 1"));
        }
        if !(self.p > 0.0 && self.q > 0.0 && self.p.is_finite() && self.q.is_finite()) {
            return Err(Error::invalid(what, "p and q must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(what, "learning rate must be positive"));
        }
        Ok(())
    }
}

/// Node vectors, row `i` belonging to `ids[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbedding {
    pub ids: Vec<u32>,
    pub dimensions: usize,
    pub vectors: Vec<f64>,
}

impl NodeEmbedding {
    pub fn vector(&self, id: u32) -> Option<&[f64]> {
        let i = self.ids.iter().position(|&x| x == id)?;
        Some(&self.vectors[i * self.dimensions..(i + 1) * self.dimensions])
    }

    pub fn rows(&self) -> impl Iterator<Item = (u32, &[f64])> {
        self.ids
            .iter()
            .copied()
            .zip(self.vectors.chunks_exact(self.dimensions.max(1)))
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Walk, train and return the node embedding of one window's graph.
pub fn embed_graph(graph: &MsgGraph, params: &Node2VecParams) -> NodeEmbedding {
    let ig = IndexedGraph::from_msg(graph);
    let window_seed = seed::derive(params.seed, graph.window_index as u64);
    let walks = generate_walks(&ig, params, seed::derive(window_seed, seed::STREAM_WALK));
    train_skipgram(&walks, &ig.ids, params, window_seed)
}

/// Unweighted mean of all node vectors. An empty embedding yields the zero
/// vector and `false`.
pub fn whole_graph_embedding(emb: &NodeEmbedding) -> (Vec<f64>, bool) {
    let d = emb.dimensions;
    let mut mean = vec![0.0; d];
    if emb.is_empty() {
        return (mean, false);
    }
    for (_, row) in emb.rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    let n = emb.ids.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    (mean, true)
}

/// Feature vector of one window: averaged graph embedding followed by
/// `(mu, sigma)` pairs in canonical signal order.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeature {
    pub window_index: usize,
    pub label: Label,
    pub graph_part: Vec<f64>,
    pub stats_part: Vec<f64>,
}

impl WindowFeature {
    pub fn len(&self) -> usize {
        self.graph_part.len() + self.stats_part.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> Vec<f64> {
        let mut v = self.graph_part.clone();
        v.extend_from_slice(&self.stats_part);
        v
    }
}

/// Lay out `[mu_1, sigma_1, mu_2, sigma_2, ...]` over `canonical`
/// (`(can_id, signal name)` pairs). Signals of nodes absent from the window
/// are `(0, 0)`. An empty canonical order gives the embeddings-only vector.
pub fn assemble_feature(
    window_index: usize,
    label: Label,
    graph_emb: Vec<f64>,
    annotations: &BTreeMap<u32, Vec<SignalStat>>,
    canonical: &[(u32, String)],
) -> WindowFeature {
    let mut stats = Vec::with_capacity(2 * canonical.len());
    for (id, name) in canonical {
        let s = annotations
            .get(id)
            .and_then(|list| list.iter().find(|s| &s.name == name));
        match s {
            Some(s) => stats.extend([s.mu, s.sigma]),
            None => stats.extend([0.0, 0.0]),
        }
    }
    WindowFeature {
        window_index,
        label,
        graph_part: graph_emb,
        stats_part: stats,
    }
}

/// Full per-window feature: embedding of the graph (zero vector for an empty
/// window) plus its annotations.
pub fn window_feature(
    graph: &MsgGraph,
    params: &Node2VecParams,
    canonical: &[(u32, String)],
) -> WindowFeature {
    let graph_emb = if graph.is_empty() {
        vec![0.0; params.dimensions]
    } else {
        whole_graph_embedding(&embed_graph(graph, params)).0
    };
    assemble_feature(
        graph.window_index,
        graph.label,
        graph_emb,
        &graph.annotations,
        canonical,
    )
}

/// Feature table rows as read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub window_index: Vec<usize>,
    pub labels: Vec<bool>,
    pub rows: Vec<Vec<f64>>,
}

/// CSV with header `window_index,label,f0..f{K-1}`; label is 1 for attack
/// windows and 0 otherwise. Values use shortest round-trip formatting.
pub fn feature_table_csv(features: &[WindowFeature]) -> String {
    let k = features.first().map_or(0, WindowFeature::len);
    let mut out = String::from("window_index,label");
    for i in 0..k {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for f in features {
        out.push_str(&format!("{},{}", f.window_index, u8::from(f.label.is_attack())));
        for v in f.values() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn parse_feature_table(text: &str) -> Result<FeatureTable> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Schema("empty feature table".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "window_index" || cols[1] != "label" {
        return Err(Error::Schema("feature table header must start with `window_index,label`".into()));
    }
    for (i, c) in cols[2..].iter().enumerate() {
        if *c != format!("f{i}") {
            return Err(Error::Schema(format!("feature column {} is `{c}`, expected `f{i}`", i + 2)));
        }
    }
    let mut table = FeatureTable {
        window_index: Vec::new(),
        labels: Vec::new(),
        rows: Vec::new(),
    };
    for (ln, line) in lines {
        let line_no = ln + 1;
        let parse_err = |msg: String| Error::Parse { line: line_no, msg };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(parse_err(format!("{} fields, header has {}", fields.len(), cols.len())));
        }
        let index = fields[0]
            .parse()
            .map_err(|_| parse_err(format!("bad window index `{}`", fields[0])))?;
        let label = match fields[1] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(format!("label `{other}` is not 0 or 1"))),
        };
        let row = fields[2..]
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| parse_err(format!("`{v}` is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        table.window_index.push(index);
        table.labels.push(label);
        table.rows.push(row);
    }
    Ok(table)
}
