//! Netlist to graph conversion and one-hot node features.
//!
//! Vertices are cells. Every net driven by a cell contributes an undirected
//! edge from the driver to each sink cell; parallel edges and self-loops are
//! dropped. Each node carries five raw features (cell-to-cell fan-in and
//! fan-out, primitive kind, primary-input and primary-output connections),
//! each one-hot encoded with an overflow bucket for large counts.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{Driver, Netlist, PrimitiveKind, Sink};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("primitive kind {0} is not in the feature vocabulary")]
    UnknownKind(PrimitiveKind),
    #[error("graph file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawFeatures {
    pub fanin: usize,
    pub fanout: usize,
    pub kind: PrimitiveKind,
    pub pi: usize,
    pub po: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CircuitGraph {
    pub node_ids: Vec<String>,
    /// Undirected edges as `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    pub features: Vec<RawFeatures>,
}

pub fn extract_graph(netlist: &Netlist) -> CircuitGraph {
    let n = netlist.cells().len();
    let mut features: Vec<RawFeatures> = netlist
        .cells()
        .iter()
        .map(|c| RawFeatures {
            fanin: 0,
            fanout: 0,
            kind: c.kind,
            pi: 0,
            po: 0,
        })
        .collect();
    let mut edges = BTreeSet::new();
    for net in netlist.nets() {
        for sink in &net.sinks {
            match (net.driver, *sink) {
                (Driver::Cell(d), Sink::Cell(s, _)) => {
                    features[d].fanout += 1;
                    features[s].fanin += 1;
                    if d != s {
                        edges.insert((d.min(s), d.max(s)));
                    }
                }
                (Driver::Port(_), Sink::Cell(s, _)) => features[s].pi += 1,
                (Driver::Cell(d), Sink::Port(_)) => features[d].po += 1,
                (Driver::Port(_), Sink::Port(_)) => {}
            }
        }
    }
    debug_assert_eq!(features.len(), n);
    CircuitGraph {
        node_ids: netlist.cells().iter().map(|c| c.id.clone()).collect(),
        edges: edges.into_iter().collect(),
        features,
    }
}

impl CircuitGraph {
    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    /// Neighbour lists, each sorted ascending.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    /// Relabels nodes: old node `i` becomes node `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> CircuitGraph {
        let n = self.node_count();
        assert_eq!(perm.len(), n);
        let mut node_ids = vec![String::new(); n];
        let mut features = self.features.clone();
        for (old, &new) in perm.iter().enumerate() {
            node_ids[new] = self.node_ids[old].clone();
            features[new] = self.features[old];
        }
        let mut edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (perm[i], perm[j]);
                (a.min(b), a.max(b))
            })
            .collect();
        edges.sort_unstable();
        CircuitGraph {
            node_ids,
            edges,
            features,
        }
    }

    /// Connected components as sorted node lists, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.node_count()];
        let mut out = Vec::new();
        for start in 0..self.node_count() {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut i = 0;
            while i < comp.len() {
                for &m in &adj[comp[i]] {
                    if !seen[m] {
                        seen[m] = true;
                        comp.push(m);
                    }
                }
                i += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Subgraph induced by `keep`, renumbered in ascending order.
    pub fn induced(&self, keep: &[usize]) -> CircuitGraph {
        let mut index = vec![usize::MAX; self.node_count()];
        let mut keep: Vec<usize> = keep.to_vec();
        keep.sort_unstable();
        for (new, &old) in keep.iter().enumerate() {
            index[old] = new;
        }
        CircuitGraph {
            node_ids: keep.iter().map(|&i| self.node_ids[i].clone()).collect(),
            features: keep.iter().map(|&i| self.features[i]).collect(),
            edges: self
                .edges
                .iter()
                .filter(|&&(i, j)| index[i] != usize::MAX && index[j] != usize::MAX)
                .map(|&(i, j)| (index[i], index[j]))
                .collect(),
        }
    }
}

pub const FANIN_CAP: usize = 32;
pub const FANOUT_CAP: usize = 32;
pub const PI_CAP: usize = 8;
pub const PO_CAP: usize = 8;

/// Category tables for the five feature groups.
///
/// Integer groups hold one bucket per value `0..=cap` plus an overflow
/// bucket. The kind group lists the kinds seen when the vocabulary was built,
/// in [`PrimitiveKind`] order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVocabulary {
    pub fanin_cap: usize,
    pub fanout_cap: usize,
    pub kinds: Vec<PrimitiveKind>,
    pub pi_cap: usize,
    pub po_cap: usize,
}

impl FeatureVocabulary {
    pub fn group_sizes(&self) -> [usize; 5] {
        [
            self.fanin_cap + 2,
            self.fanout_cap + 2,
            self.kinds.len(),
            self.pi_cap + 2,
            self.po_cap + 2,
        ]
    }

    pub fn total_dim(&self) -> usize {
        self.group_sizes().iter().sum()
    }

    fn bucket(value: usize, cap: usize) -> usize {
        value.min(cap + 1)
    }

    /// Active column of each group for one node.
    pub fn indices(&self, f: &RawFeatures) -> Result<[usize; 5], GraphError> {
        let sizes = self.group_sizes();
        let kind = self
            .kinds
            .iter()
            .position(|&k| k == f.kind)
            .ok_or(GraphError::UnknownKind(f.kind))?;
        let local = [
            Self::bucket(f.fanin, self.fanin_cap),
            Self::bucket(f.fanout, self.fanout_cap),
            kind,
            Self::bucket(f.pi, self.pi_cap),
            Self::bucket(f.po, self.po_cap),
        ];
        let mut offset = 0;
        let mut out = [0; 5];
        for g in 0..5 {
            out[g] = offset + local[g];
            offset += sizes[g];
        }
        Ok(out)
    }
}

pub fn build_vocab<'a>(graphs: impl IntoIterator<Item = &'a CircuitGraph>) -> FeatureVocabulary {
    let kinds: BTreeSet<PrimitiveKind> = graphs
        .into_iter()
        .flat_map(|g| g.features.iter().map(|f| f.kind))
        .collect();
    FeatureVocabulary {
        fanin_cap: FANIN_CAP,
        fanout_cap: FANOUT_CAP,
        kinds: kinds.into_iter().collect(),
        pi_cap: PI_CAP,
        po_cap: PO_CAP,
    }
}

/// One-hot node features stored by active column; [`FeatureMatrix::dense`]
/// expands them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMatrix {
    pub rows: Vec<[usize; 5]>,
    pub dim: usize,
}

impl FeatureMatrix {
    pub fn dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.rows.len(), self.dim));
        for (i, row) in self.rows.iter().enumerate() {
            for &c in row {
                m[[i, c]] = 1.0;
            }
        }
        m
    }
}

pub fn encode_features(graph: &CircuitGraph, vocab: &FeatureVocabulary) -> Result<FeatureMatrix, GraphError> {
    Ok(FeatureMatrix {
        rows: graph
            .features
            .iter()
            .map(|f| vocab.indices(f))
            .collect::<Result<_, _>>()?,
        dim: vocab.total_dim(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub design_id: String,
    pub node_count: usize,
    pub total_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub onehot: [usize; 5],
}

/// On-disk graph: node ids with their active one-hot columns, plus edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphFile {
    pub meta: GraphMeta,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<(usize, usize)>,
}

impl GraphFile {
    pub fn new(design_id: &str, graph: &CircuitGraph, features: &FeatureMatrix) -> GraphFile {
        GraphFile {
            meta: GraphMeta {
                design_id: design_id.to_string(),
                node_count: graph.node_count(),
                total_dim: features.dim,
            },
            nodes: graph
                .node_ids
                .iter()
                .zip(&features.rows)
                .map(|(id, row)| GraphNode {
                    id: id.clone(),
                    onehot: *row,
                })
                .collect(),
            edges: graph.edges.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph file serialises")
    }

    pub fn from_json(text: &str) -> Result<GraphFile, GraphError> {
        let g: GraphFile = serde_json::from_str(text).map_err(|e| GraphError::Format(e.to_string()))?;
        if g.nodes.len() != g.meta.node_count {
            return Err(GraphError::Format(format!(
                "meta says {} nodes, file has {}",
                g.meta.node_count,
                g.nodes.len()
            )));
        }
        if g.edges.iter().any(|&(i, j)| i >= g.nodes.len() || j >= g.nodes.len()) {
            return Err(GraphError::Format("edge endpoint out of range".into()));
        }
        if g.nodes.iter().flat_map(|n| n.onehot).any(|c| c >= g.meta.total_dim) {
            return Err(GraphError::Format("one-hot index out of range".into()));
        }
        Ok(g)
    }

    pub fn features(&self) -> FeatureMatrix {
        FeatureMatrix {
            rows: self.nodes.iter().map(|n| n.onehot).collect(),
            dim: self.meta.total_dim,
        }
    }
}
