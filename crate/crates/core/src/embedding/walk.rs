//! Second-order biased random walks.

use rand::Rng;

use super::alias::AliasTable;
use super::Node2VecParams;
use crate::error::{Error, Result};
use crate::msg_graph::MsgGraph;
use crate::seed;

/// Compressed adjacency of a message sequence graph. Node `i` is the `i`-th
/// smallest arbitration ID; neighbor lists are sorted by node index.
#[derive(Debug, Clone)]
pub struct IndexedGraph {
    pub ids: Vec<u32>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl IndexedGraph {
    pub fn from_msg(graph: &MsgGraph) -> Self {
        let ids: Vec<u32> = graph.nodes.iter().copied().collect();
        let index = |id: u32| ids.binary_search(&id).expect("edge endpoint is a node");
        let mut offsets = vec![0usize; ids.len() + 1];
        let mut targets = Vec::with_capacity(graph.edges.len());
        let mut weights = Vec::with_capacity(graph.edges.len());
        // BTreeMap order is (from, to) ascending, which is CSR order.
        for (&(u, v), &w) in &graph.edges {
            offsets[index(u) + 1] += 1;
            targets.push(index(v));
            weights.push(w as f64);
        }
        for i in 0..ids.len() {
            offsets[i + 1] += offsets[i];
        }
        IndexedGraph {
            ids,
            offsets,
            targets,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.targets[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn neighbor_weights(&self, node: usize) -> &[f64] {
        &self.weights[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.neighbors(from).binary_search(&to).is_ok()
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    fn edge_count(&self) -> usize {
        self.targets.len()
    }
}

/// Unnormalized transition scores from `curr` to each of its out-neighbors,
/// having arrived from `prev`: `w(curr, x) * alpha` with alpha = 1/p when
/// `x == prev`, 1 when `prev -> x` is an edge, 1/q otherwise.
fn bias_scores(g: &IndexedGraph, prev: Option<usize>, curr: usize, p: f64, q: f64) -> Vec<f64> {
    let nbrs = g.neighbors(curr);
    let w = g.neighbor_weights(curr);
    match prev {
        None => w.to_vec(),
        Some(t) => nbrs
            .iter()
            .zip(w)
            .map(|(&x, &w)| {
                if x == t {
                    w / p
                } else if g.has_edge(t, x) {
                    w
                } else {
                    w / q
                }
            })
            .collect(),
    }
}

/// Probability of stepping to each out-neighbor of `curr` (aligned with
/// [`IndexedGraph::neighbors`]). A node without out-edges is a dead end.
pub fn transition_distribution(
    g: &IndexedGraph,
    prev: Option<usize>,
    curr: usize,
    p: f64,
    q: f64,
) -> Result<Vec<f64>> {
    if g.out_degree(curr) == 0 {
        return Err(Error::Insufficient(format!(
            "node {:#x} has no out-edges",
            g.ids[curr]
        )));
    }
    let scores = bias_scores(g, prev, curr, p, q);
    let total: f64 = scores.iter().sum();
    Ok(scores.into_iter().map(|s| s / total).collect())
}

/// [`transition_distribution`] addressed by arbitration ID.
pub fn transition_distribution_by_id(
    graph: &MsgGraph,
    prev: Option<u32>,
    curr: u32,
    p: f64,
    q: f64,
) -> Result<Vec<(u32, f64)>> {
    let g = IndexedGraph::from_msg(graph);
    let lookup = |id: u32| {
        g.index_of(id)
            .ok_or_else(|| Error::invalid("node", format!("{id:#x} not in graph")))
    };
    let c = lookup(curr)?;
    let t = prev.map(lookup).transpose()?;
    let probs = transition_distribution(&g, t, c, p, q)?;
    Ok(g.neighbors(c)
        .iter()
        .zip(probs)
        .map(|(&x, pr)| (g.ids[x], pr))
        .collect())
}

/// Precomputed alias tables: one per node for the first step, one per edge
/// `prev -> curr` for every later step.
pub struct Walker<'g> {
    graph: &'g IndexedGraph,
    first: Vec<Option<AliasTable>>,
    by_edge: Vec<Option<AliasTable>>,
}

impl<'g> Walker<'g> {
    pub fn new(graph: &'g IndexedGraph, p: f64, q: f64) -> Self {
        let first = (0..graph.len())
            .map(|v| (graph.out_degree(v) > 0).then(|| AliasTable::new(graph.neighbor_weights(v))))
            .collect();
        let mut by_edge = Vec::with_capacity(graph.edge_count());
        for t in 0..graph.len() {
            for &v in graph.neighbors(t) {
                by_edge.push(
                    (graph.out_degree(v) > 0)
                        .then(|| AliasTable::new(&bias_scores(graph, Some(t), v, p, q))),
                );
            }
        }
        Walker {
            graph,
            first,
            by_edge,
        }
    }

    /// One walk of at most `length` nodes, truncated at a dead end.
    pub fn walk<R: Rng + ?Sized>(&self, start: usize, length: usize, rng: &mut R) -> Vec<usize> {
        let g = self.graph;
        let mut walk = Vec::with_capacity(length);
        walk.push(start);
        // Index of the edge just traversed, in CSR order.
        let mut last_edge: Option<usize> = None;
        while walk.len() < length {
            let curr = *walk.last().unwrap();
            let table = match last_edge {
                None => self.first[curr].as_ref(),
                Some(e) => self.by_edge[e].as_ref(),
            };
            let Some(table) = table else { break };
            let k = table.sample(rng);
            walk.push(g.neighbors(curr)[k]);
            last_edge = Some(g.offsets[curr] + k);
        }
        walk
    }
}

/// `walks_per_node` walks from every node. Each start node draws from its own
/// stream derived from `walk_seed`; the output is round-major (all nodes'
/// first walks, then all second walks, ...).
pub fn generate_walks(g: &IndexedGraph, params: &Node2VecParams, walk_seed: u64) -> Vec<Vec<usize>> {
    if g.is_empty() {
        return Vec::new();
    }
    let walker = Walker::new(g, params.p, params.q);
    let per_node: Vec<Vec<Vec<usize>>> = (0..g.len())
        .map(|v| {
            let mut rng = seed::rng(walk_seed, v as u64);
            (0..params.walks_per_node)
                .map(|_| walker.walk(v, params.walk_length, &mut rng))
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(g.len() * params.walks_per_node);
    for r in 0..params.walks_per_node {
        for walks in &per_node {
            out.push(walks[r].clone());
        }
    }
    out
}
