//! Mixed graphs with positive edge costs, incidence matrices, and node
//! distributions.
//!
//! A graph here is a connected skeleton of undirected and directed edges.
//! Every edge carries a strictly positive transport cost. Nodes may carry
//! integer labels, which the label-based cost assignment uses.

use std::collections::VecDeque;

use thiserror::Error;

/// Sum-to-one tolerance for simplex membership checks.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("edge {edge} has nonpositive cost {cost}")]
    NonpositiveCost { edge: usize, cost: f64 },
    #[error("edge {edge} is a self-loop on node {node}")]
    SelfLoop { edge: usize, node: usize },
    #[error("edge {edge} endpoint {node} is out of range (|V| = {num_nodes})")]
    EndpointOutOfRange {
        edge: usize,
        node: usize,
        num_nodes: usize,
    },
    #[error("underlying undirected skeleton is disconnected: {components} components")]
    Disconnected { components: usize },
    #[error("node {node} is isolated (degree 0)")]
    IsolatedNode { node: usize },
    #[error("node {node} has no label")]
    UnlabeledNode { node: usize },
    #[error("distribution entry {index} is negative ({value})")]
    NegativeMass { index: usize, value: f64 },
    #[error("distribution has mass {mass}, expected 1 within {SIMPLEX_TOL}")]
    NotNormalized { mass: f64 },
    #[error("distribution length {got} does not match |V| = {expected}")]
    LengthMismatch { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Undirected,
    /// Directed from `tail` to `head` as stored on the edge.
    Directed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub kind: EdgeKind,
    pub cost: f64,
}

impl Edge {
    pub fn undirected(u: usize, v: usize, cost: f64) -> Self {
        Edge {
            tail: u,
            head: v,
            kind: EdgeKind::Undirected,
            cost,
        }
    }

    pub fn directed(tail: usize, head: usize, cost: f64) -> Self {
        Edge {
            tail,
            head,
            kind: EdgeKind::Directed,
            cost,
        }
    }
}

/// A validated mixed graph. Immutable after construction; parallel edges are
/// allowed, each with its own cost.
#[derive(Debug, Clone)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<Edge>,
    labels: Vec<Option<i64>>,
    /// adjacency over the undirected skeleton: (edge index, neighbor)
    adj: Vec<Vec<(usize, usize)>>,
}

impl Graph {
    pub fn new(num_nodes: usize, edges: Vec<Edge>) -> Result<Self, GraphError> {
        Self::with_labels(num_nodes, edges, vec![None; num_nodes])
    }

    pub fn with_labels(
        num_nodes: usize,
        edges: Vec<Edge>,
        labels: Vec<Option<i64>>,
    ) -> Result<Self, GraphError> {
        if num_nodes == 0 {
            return Err(GraphError::Empty);
        }
        debug_assert_eq!(labels.len(), num_nodes);
        for (i, e) in edges.iter().enumerate() {
            for node in [e.tail, e.head] {
                if node >= num_nodes {
                    return Err(GraphError::EndpointOutOfRange {
                        edge: i,
                        node,
                        num_nodes,
                    });
                }
            }
            if e.tail == e.head {
                return Err(GraphError::SelfLoop { edge: i, node: e.tail });
            }
            if !(e.cost > 0.0) {
                return Err(GraphError::NonpositiveCost {
                    edge: i,
                    cost: e.cost,
                });
            }
        }
        let mut adj = vec![Vec::new(); num_nodes];
        for (i, e) in edges.iter().enumerate() {
            adj[e.tail].push((i, e.head));
            adj[e.head].push((i, e.tail));
        }
        let components = count_components(num_nodes, &adj);
        if components != 1 {
            return Err(GraphError::Disconnected { components });
        }
        Ok(Graph {
            num_nodes,
            edges,
            labels,
            adj,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn label(&self, v: usize) -> Option<i64> {
        self.labels[v]
    }

    pub fn labels(&self) -> &[Option<i64>] {
        &self.labels
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    /// Neighbors of `v` over the undirected skeleton as (edge index, node).
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[v]
    }

    /// Fixed orientation of edge `e` as (tail, head). Directed edges keep
    /// their stored direction; undirected edges are oriented from the lower
    /// node id to the higher.
    pub fn orientation(&self, e: usize) -> (usize, usize) {
        let edge = &self.edges[e];
        match edge.kind {
            EdgeKind::Directed => (edge.tail, edge.head),
            EdgeKind::Undirected => {
                if edge.tail < edge.head {
                    (edge.tail, edge.head)
                } else {
                    (edge.head, edge.tail)
                }
            }
        }
    }

    /// Stacked cost vector c.
    pub fn costs(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.cost).collect()
    }

    /// Induced subgraph on `nodes` (need not be connected). Returns the kept
    /// edge indices alongside; node ids are renumbered by ascending old id.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> (Vec<usize>, Vec<Edge>) {
        let mut keep = vec![false; self.num_nodes];
        for &v in nodes {
            keep[v] = true;
        }
        let mut kept_edges = Vec::new();
        let mut edges = Vec::new();
        for (i, e) in self.edges.iter().enumerate() {
            if keep[e.tail] && keep[e.head] {
                kept_edges.push(i);
                edges.push(*e);
            }
        }
        (kept_edges, edges)
    }
}

fn count_components(num_nodes: usize, adj: &[Vec<(usize, usize)>]) -> usize {
    let mut seen = vec![false; num_nodes];
    let mut components = 0;
    for start in 0..num_nodes {
        if seen[start] {
            continue;
        }
        components += 1;
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            for &(_, w) in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    components
}

/// Incidence-row convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convention {
    /// Signed rows: -1 at the tail, +1 at the head of the fixed orientation.
    #[default]
    Oriented,
    /// Unsigned rows: +1 at both endpoints of an undirected edge. Directed
    /// edges always use the signed directed form.
    AsWritten,
}

/// Sparse |E| x |V| incidence matrix: two nonzeros per row.
#[derive(Debug, Clone)]
pub struct IncidenceMatrix {
    /// per edge: [(node, value); 2]
    rows: Vec<[(usize, f64); 2]>,
    num_nodes: usize,
    convention: Convention,
}

impl IncidenceMatrix {
    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn row(&self, e: usize) -> [(usize, f64); 2] {
        self.rows[e]
    }

    /// (F t)(e) for a single edge.
    pub fn apply_row(&self, e: usize, t: &[f64]) -> f64 {
        let [(u, a), (v, b)] = self.rows[e];
        a * t[u] + b * t[v]
    }

    /// F t: one entry per edge.
    pub fn apply(&self, t: &[f64]) -> Vec<f64> {
        (0..self.rows.len()).map(|e| self.apply_row(e, t)).collect()
    }

    /// F^T x: one entry per node.
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_nodes];
        for (e, &[(u, a), (v, b)]) in self.rows.iter().enumerate() {
            out[u] += a * x[e];
            out[v] += b * x[e];
        }
        out
    }
}

/// Build the incidence matrix of `graph` under the requested convention.
/// Deterministic: undirected edges take the lower-id endpoint as tail.
pub fn build_incidence(graph: &Graph, convention: Convention) -> IncidenceMatrix {
    let rows = graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let (tail, head) = graph.orientation(e);
            match (convention, edge.kind) {
                (Convention::AsWritten, EdgeKind::Undirected) => [(tail, 1.0), (head, 1.0)],
                _ => [(tail, -1.0), (head, 1.0)],
            }
        })
        .collect();
    IncidenceMatrix {
        rows,
        num_nodes: graph.num_nodes(),
        convention,
    }
}

/// Nonnegative vector of mass over the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDistribution {
    values: Vec<f64>,
}

impl NodeDistribution {
    /// A distribution in the simplex Delta(V): entries >= 0, sum = 1 within
    /// `SIMPLEX_TOL`.
    pub fn simplex(values: Vec<f64>) -> Result<Self, GraphError> {
        let d = Self::nonnegative(values)?;
        let mass = d.mass();
        if (mass - 1.0).abs() > SIMPLEX_TOL {
            return Err(GraphError::NotNormalized { mass });
        }
        Ok(d)
    }

    /// A general nonnegative mass vector (no sum constraint).
    pub fn nonnegative(values: Vec<f64>) -> Result<Self, GraphError> {
        for (i, &v) in values.iter().enumerate() {
            if !(v >= 0.0) {
                return Err(GraphError::NegativeMass { index: i, value: v });
            }
        }
        Ok(NodeDistribution { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, v: usize) -> f64 {
        self.values[v]
    }

    /// Indices with strictly positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.values[v] > 0.0).collect()
    }

    pub fn check_len(&self, graph: &Graph) -> Result<(), GraphError> {
        if self.len() != graph.num_nodes() {
            return Err(GraphError::LengthMismatch {
                got: self.len(),
                expected: graph.num_nodes(),
            });
        }
        Ok(())
    }
}

/// Degree-stationary prior: rho0(v) = deg(v) / sum of degrees.
pub fn stationary_prior(graph: &Graph) -> Result<NodeDistribution, GraphError> {
    let mut total = 0usize;
    for v in 0..graph.num_nodes() {
        let deg = graph.degree(v);
        if deg == 0 {
            return Err(GraphError::IsolatedNode { node: v });
        }
        total += deg;
    }
    let values = (0..graph.num_nodes())
        .map(|v| graph.degree(v) as f64 / total as f64)
        .collect();
    NodeDistribution::simplex(values)
}

/// Reassign edge costs from endpoint labels: `same_cost` when the labels
/// agree, `diff_cost` otherwise. Every node must be labeled.
pub fn label_costs(graph: &Graph, same_cost: f64, diff_cost: f64) -> Result<Graph, GraphError> {
    if !(same_cost > 0.0) {
        return Err(GraphError::NonpositiveCost {
            edge: usize::MAX,
            cost: same_cost,
        });
    }
    if !(diff_cost > 0.0) {
        return Err(GraphError::NonpositiveCost {
            edge: usize::MAX,
            cost: diff_cost,
        });
    }
    let mut edges = graph.edges().to_vec();
    for e in edges.iter_mut() {
        let lt = graph.label(e.tail).ok_or(GraphError::UnlabeledNode { node: e.tail })?;
        let lh = graph.label(e.head).ok_or(GraphError::UnlabeledNode { node: e.head })?;
        e.cost = if lt == lh { same_cost } else { diff_cost };
    }
    Graph::with_labels(graph.num_nodes(), edges, graph.labels().to_vec())
}

/// Default label costs from the experiments setup.
pub const DEFAULT_SAME_LABEL_COST: f64 = 0.01;
pub const DEFAULT_DIFF_LABEL_COST: f64 = 0.02;
