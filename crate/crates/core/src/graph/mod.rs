//! Heterogeneous graph data model.
//!
//! A [`HeteroGraph`] holds typed nodes, typed undirected edges and a dense
//! feature matrix. Graphs are assembled from [`GraphParts`], which may hold
//! arbitrary (possibly invalid) data; [`validate`] reports every violated
//! invariant and [`HeteroGraph::from_parts`] normalizes then validates.

mod io;
mod synth;

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use ndarray::Array2;

use crate::error::{Error, Result};

pub use io::{load_graph, load_labels, save_graph, save_labels, LoadedGraph};
pub use synth::{gen_synthetic, SynthConfig};

/// A typed edge `(src, dst, edge_type)`.
pub type Edge = (usize, usize, usize);

/// Unvalidated graph contents.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphParts {
    pub num_nodes: usize,
    pub node_type: Vec<usize>,
    pub num_node_types: usize,
    pub edges: Vec<Edge>,
    pub num_edge_types: usize,
    pub features: Array2<f64>,
}

impl GraphParts {
    /// Symmetrizes the edge list, drops self-loops and duplicates. Idempotent.
    pub fn normalize(&mut self) {
        let mut set = BTreeSet::new();
        for &(a, b, t) in &self.edges {
            if a == b {
                continue;
            }
            set.insert((a, b, t));
            set.insert((b, a, t));
        }
        self.edges = set.into_iter().collect();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EdgeEndpointOutOfRange { edge: usize, node: usize },
    NodeTypeCount { expected: usize, found: usize },
    NodeTypeOutOfRange { node: usize, type_id: usize },
    EdgeTypeOutOfRange { edge: usize, type_id: usize },
    Asymmetric { edge: usize },
    SelfLoop { edge: usize },
    DuplicateEdge { edge: usize },
    FeatureRows { expected: usize, found: usize },
    EmptyFeatures,
    NonFiniteFeature { node: usize, column: usize },
    NoTypes,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EdgeEndpointOutOfRange { edge, node } => {
                write!(f, "edge endpoint out of range: edge #{edge} references node {node}")
            }
            Violation::NodeTypeCount { expected, found } => {
                write!(f, "node type map has {found} entries, expected {expected}")
            }
            Violation::NodeTypeOutOfRange { node, type_id } => {
                write!(f, "node {node} has type {type_id} outside [0, |A|)")
            }
            Violation::EdgeTypeOutOfRange { edge, type_id } => {
                write!(f, "edge #{edge} has type {type_id} outside [0, |R|)")
            }
            Violation::Asymmetric { edge } => write!(f, "edge #{edge} has no reverse edge"),
            Violation::SelfLoop { edge } => write!(f, "edge #{edge} is a self-loop"),
            Violation::DuplicateEdge { edge } => write!(f, "edge #{edge} is a duplicate"),
            Violation::FeatureRows { expected, found } => {
                write!(f, "feature matrix has {found} rows, expected {expected}")
            }
            Violation::EmptyFeatures => write!(f, "feature dimension must be at least 1"),
            Violation::NonFiniteFeature { node, column } => {
                write!(f, "feature ({node}, {column}) is not finite")
            }
            Violation::NoTypes => write!(f, "graph needs at least one node type and one edge type"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub homogeneous: bool,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok{}", if self.homogeneous { " (homogeneous)" } else { "" });
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every graph invariant and reports all violations.
pub fn validate(parts: &GraphParts) -> ValidationReport {
    let mut violations = Vec::new();
    let n = parts.num_nodes;
    if parts.num_node_types == 0 || parts.num_edge_types == 0 {
        violations.push(Violation::NoTypes);
    }
    if parts.node_type.len() != n {
        violations.push(Violation::NodeTypeCount { expected: n, found: parts.node_type.len() });
    }
    for (node, &t) in parts.node_type.iter().enumerate() {
        if t >= parts.num_node_types {
            violations.push(Violation::NodeTypeOutOfRange { node, type_id: t });
        }
    }

    let mut seen = HashSet::with_capacity(parts.edges.len());
    for (i, &(a, b, t)) in parts.edges.iter().enumerate() {
        for node in [a, b] {
            if node >= n {
                violations.push(Violation::EdgeEndpointOutOfRange { edge: i, node });
            }
        }
        if t >= parts.num_edge_types {
            violations.push(Violation::EdgeTypeOutOfRange { edge: i, type_id: t });
        }
        if a == b {
            violations.push(Violation::SelfLoop { edge: i });
        }
        if !seen.insert((a, b, t)) {
            violations.push(Violation::DuplicateEdge { edge: i });
        }
    }
    for (i, &(a, b, t)) in parts.edges.iter().enumerate() {
        if !seen.contains(&(b, a, t)) {
            violations.push(Violation::Asymmetric { edge: i });
        }
    }

    if parts.features.nrows() != n {
        violations.push(Violation::FeatureRows { expected: n, found: parts.features.nrows() });
    }
    if parts.features.ncols() == 0 {
        violations.push(Violation::EmptyFeatures);
    }
    for ((node, column), x) in parts.features.indexed_iter() {
        if !x.is_finite() {
            violations.push(Violation::NonFiniteFeature { node, column });
        }
    }

    ValidationReport {
        homogeneous: parts.num_node_types == 1 && parts.num_edge_types == 1,
        violations,
    }
}

/// A validated heterogeneous graph with symmetric, deduplicated edges.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    parts: GraphParts,
    adjacency: Vec<Vec<usize>>,
    names: Names,
}

/// External names kept for reporting and file round trips.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Names {
    pub node_ids: Vec<String>,
    pub node_types: Vec<String>,
    pub edge_types: Vec<String>,
}

impl Names {
    fn defaults(parts: &GraphParts) -> Self {
        Names {
            node_ids: (0..parts.num_nodes).map(|i| i.to_string()).collect(),
            node_types: (0..parts.num_node_types).map(|i| format!("t{i}")).collect(),
            edge_types: (0..parts.num_edge_types).map(|i| format!("r{i}")).collect(),
        }
    }
}

impl HeteroGraph {
    pub fn from_parts(parts: GraphParts) -> Result<Self> {
        let names = Names::defaults(&parts);
        Self::with_names(parts, names)
    }

    pub fn with_names(mut parts: GraphParts, names: Names) -> Result<Self> {
        parts.normalize();
        let report = validate(&parts);
        if !report.is_ok() {
            return Err(Error::InvalidGraph(report));
        }
        if names.node_ids.len() != parts.num_nodes
            || names.node_types.len() != parts.num_node_types
            || names.edge_types.len() != parts.num_edge_types
        {
            return Err(Error::arg("name tables do not match graph dimensions"));
        }
        let mut adjacency = vec![Vec::new(); parts.num_nodes];
        for &(a, b, _) in &parts.edges {
            adjacency[a].push(b);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(HeteroGraph { parts, adjacency, names })
    }

    pub fn num_nodes(&self) -> usize {
        self.parts.num_nodes
    }

    pub fn num_node_types(&self) -> usize {
        self.parts.num_node_types
    }

    pub fn num_edge_types(&self) -> usize {
        self.parts.num_edge_types
    }

    pub fn feature_dim(&self) -> usize {
        self.parts.features.ncols()
    }

    pub fn node_type(&self, v: usize) -> usize {
        self.parts.node_type[v]
    }

    pub fn node_types(&self) -> &[usize] {
        &self.parts.node_type
    }

    /// Directed edge list; every undirected edge appears in both orientations.
    pub fn edges(&self) -> &[Edge] {
        &self.parts.edges
    }

    /// Undirected node pairs `(a, b)` with `a < b`, each listed once.
    pub fn undirected_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<_> = self
            .adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, ns)| ns.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
            .collect();
        pairs.sort_unstable();
        pairs
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.parts.features
    }

    pub fn names(&self) -> &Names {
        &self.names
    }

    pub fn parts(&self) -> &GraphParts {
        &self.parts
    }

    pub fn is_homogeneous(&self) -> bool {
        self.parts.num_node_types == 1 && self.parts.num_edge_types == 1
    }

    pub fn validate(&self) -> ValidationReport {
        validate(&self.parts)
    }

    /// Copy of the graph with the given undirected pairs removed (any type).
    pub fn without_pairs(&self, pairs: &[(usize, usize)]) -> HeteroGraph {
        let drop: HashSet<(usize, usize)> =
            pairs.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
        let mut parts = self.parts.clone();
        parts.edges.retain(|&(a, b, _)| !drop.contains(&(a, b)));
        HeteroGraph::with_names(parts, self.names.clone())
            .expect("removing edges preserves validity")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelTarget {
    Node,
    Graph,
}

/// Class labels for nodes of a graph or for members of a graph collection.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub target: LabelTarget,
    /// `(instance id, class id)` sorted by instance id.
    pub labels: Vec<(usize, usize)>,
    pub num_classes: usize,
    pub class_names: Vec<String>,
}

impl LabelSet {
    pub fn new(target: LabelTarget, mut labels: Vec<(usize, usize)>, num_classes: usize) -> Result<Self> {
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::arg("instance labeled twice"));
        }
        if let Some(&(id, c)) = labels.iter().find(|&&(_, c)| c >= num_classes) {
            return Err(Error::arg(format!("instance {id} has class {c} >= {num_classes}")));
        }
        Ok(LabelSet {
            target,
            labels,
            num_classes,
            class_names: (0..num_classes).map(|c| format!("c{c}")).collect(),
        })
    }

    /// Checks that every labeled instance exists in a collection of `count` instances.
    pub fn check_within(&self, count: usize) -> Result<()> {
        match self.labels.iter().find(|&&(id, _)| id >= count) {
            Some(&(id, _)) => Err(Error::InvalidNode(id)),
            None => Ok(()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Instance ids grouped per class, in ascending id order.
    pub fn by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_classes];
        for &(id, c) in &self.labels {
            groups[c].push(id);
        }
        groups
    }

    pub fn class_of(&self, id: usize) -> Option<usize> {
        self.labels
            .binary_search_by_key(&id, |&(i, _)| i)
            .ok()
            .map(|pos| self.labels[pos].1)
    }
}
