//! Graph template: splitting a heterogeneous graph into homogeneous views,
//! plus the BFS context subgraphs that stand in for node-level instances.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, LabelSet, LabelTarget};

/// One homogeneous view. View 0 is the full topology with types erased;
/// view `i >= 1` holds the nodes of type `i - 1` and the edges among them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomoView {
    pub view_index: usize,
    /// Original node ids, ascending.
    pub members: Vec<usize>,
    /// Local index pairs `(a, b)` with `a < b`, each undirected edge once.
    pub edges: Vec<(usize, usize)>,
}

impl HomoView {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Local index of an original node id.
    pub fn local(&self, v: usize) -> Option<usize> {
        self.members.binary_search(&v).ok()
    }
}

/// Node-induced subgraph of a [`HeteroGraph`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgraph {
    pub center: Option<usize>,
    /// Original node ids, ascending.
    pub members: Vec<usize>,
    /// Induced edges `(a, b, edge_type)` with `a < b`.
    pub edges: Vec<(usize, usize, usize)>,
}

impl Subgraph {
    /// Induced subgraph on `members` (need not be sorted or unique).
    pub fn induced(graph: &HeteroGraph, mut members: Vec<usize>, center: Option<usize>) -> Subgraph {
        members.sort_unstable();
        members.dedup();
        let edges = induced_edges(graph, &members);
        Subgraph { center, members, edges }
    }

    pub fn whole(graph: &HeteroGraph) -> Subgraph {
        Subgraph::induced(graph, (0..graph.num_nodes()).collect(), None)
    }
}

fn induced_edges(graph: &HeteroGraph, sorted_members: &[usize]) -> Vec<(usize, usize, usize)> {
    let inside = |v: usize| sorted_members.binary_search(&v).is_ok();
    let mut edges: Vec<_> = graph
        .edges()
        .iter()
        .filter(|&&(a, b, _)| a < b && inside(a) && inside(b))
        .copied()
        .collect();
    edges.sort_unstable();
    edges
}

/// Builds views over a node subset. `members` must be sorted and unique.
fn views_over(graph: &HeteroGraph, members: &[usize], edges: &[(usize, usize, usize)]) -> Vec<HomoView> {
    let num_views = graph.num_node_types() + 1;
    let mut views: Vec<HomoView> = (0..num_views)
        .map(|i| HomoView { view_index: i, members: Vec::new(), edges: Vec::new() })
        .collect();
    for &v in members {
        views[0].members.push(v);
        views[graph.node_type(v) + 1].members.push(v);
    }
    let locals: Vec<HashMap<usize, usize>> = views
        .iter()
        .map(|view| view.members.iter().enumerate().map(|(i, &v)| (v, i)).collect())
        .collect();

    let mut pairs: Vec<(usize, usize)> = edges.iter().map(|&(a, b, _)| (a, b)).collect();
    pairs.sort_unstable();
    pairs.dedup();
    for (a, b) in pairs {
        views[0].edges.push((locals[0][&a], locals[0][&b]));
        let (ta, tb) = (graph.node_type(a), graph.node_type(b));
        if ta == tb {
            let i = ta + 1;
            let (la, lb) = (locals[i][&a], locals[i][&b]);
            views[i].edges.push((la.min(lb), la.max(lb)));
        }
    }
    views
}

/// Applies the graph template: `[G^0, G^1, ..., G^|A|]`.
pub fn graph_template(graph: &HeteroGraph) -> Vec<HomoView> {
    let members: Vec<usize> = (0..graph.num_nodes()).collect();
    let edges: Vec<_> = graph.edges().iter().filter(|e| e.0 < e.1).copied().collect();
    views_over(graph, &members, &edges)
}

/// The graph template restricted to a subgraph. Types come from the global
/// type map, so views for types absent from `sub` are empty but present.
pub fn template_of_subgraph(sub: &Subgraph, graph: &HeteroGraph) -> Vec<HomoView> {
    views_over(graph, &sub.members, &sub.edges)
}

/// Nodes within `delta` hops of `v`, ascending.
pub fn khop_nodes(graph: &HeteroGraph, v: usize, delta: usize) -> Result<Vec<usize>> {
    if v >= graph.num_nodes() {
        return Err(Error::InvalidNode(v));
    }
    let mut dist = HashMap::from([(v, 0usize)]);
    let mut queue = VecDeque::from([v]);
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        if d == delta {
            continue;
        }
        for &w in graph.neighbors(u) {
            if !dist.contains_key(&w) {
                dist.insert(w, d + 1);
                queue.push_back(w);
            }
        }
    }
    let mut nodes: Vec<usize> = dist.into_keys().collect();
    nodes.sort_unstable();
    Ok(nodes)
}

/// `delta`-hop BFS neighborhood of `v` on the full, type-agnostic topology.
pub fn context_subgraph(graph: &HeteroGraph, v: usize, delta: usize) -> Result<Subgraph> {
    let members = khop_nodes(graph, v, delta)?;
    let edges = induced_edges(graph, &members);
    Ok(Subgraph { center: Some(v), members, edges })
}

/// One ego network per labeled node, carrying that node's class. The
/// returned label set indexes the ego networks by position.
pub fn ego_networks(graph: &HeteroGraph, labels: &LabelSet, delta: usize) -> Result<(Vec<Subgraph>, LabelSet)> {
    if labels.is_empty() {
        return Err(Error::arg("empty label set"));
    }
    if labels.target != LabelTarget::Node {
        return Err(Error::arg("ego networks need node-level labels"));
    }
    let mut subs = Vec::with_capacity(labels.len());
    let mut graph_labels = Vec::with_capacity(labels.len());
    for (i, &(v, c)) in labels.labels.iter().enumerate() {
        subs.push(context_subgraph(graph, v, delta)?);
        graph_labels.push((i, c));
    }
    let mut set = LabelSet::new(LabelTarget::Graph, graph_labels, labels.num_classes)?;
    set.class_names = labels.class_names.clone();
    Ok((subs, set))
}
