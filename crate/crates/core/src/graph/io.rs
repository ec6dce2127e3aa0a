//! Tab-separated graph files.
//!
//! Node file: `<id>\t<type-name>\t<f1,f2,...,fd>`
//! Edge file: `<src>\t<dst>\t<edge-type-name>`
//! Label file: `<id>\t<class-name>`
//!
//! Lines starting with `#` and blank lines are ignored. Type and class names
//! are assigned dense ids in order of first appearance.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::{GraphParts, HeteroGraph, LabelSet, LabelTarget, Names};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: HeteroGraph,
    pub labels: Option<LabelSet>,
}

#[derive(Default)]
struct Interner {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn fields<'a>(path: &Path, line: usize, text: &'a str, expected: usize) -> Result<Vec<&'a str>> {
    let cols: Vec<&str> = text.split('\t').collect();
    if cols.len() != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("expected {expected} tab-separated fields, found {}", cols.len()),
        });
    }
    Ok(cols)
}

pub fn load_graph(node_path: &Path, edge_path: &Path, label_path: Option<&Path>) -> Result<LoadedGraph> {
    let mut ids = Interner::default();
    let mut node_types = Interner::default();
    let mut node_type = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    let mut dim: Option<usize> = None;

    let text = read(node_path)?;
    for (line, l) in data_lines(&text) {
        let cols = fields(node_path, line, l, 3)?;
        let parse_err = |msg: String| Error::Parse { path: node_path.to_path_buf(), line, msg };
        if ids.index.contains_key(cols[0]) {
            return Err(parse_err(format!("duplicate node id {:?}", cols[0])));
        }
        ids.intern(cols[0]);
        node_type.push(node_types.intern(cols[1]));
        let feats = cols[2]
            .split(',')
            .map(|f| f.trim().parse::<f64>().map_err(|e| parse_err(format!("bad feature {f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        match dim {
            None => dim = Some(feats.len()),
            Some(d) if d != feats.len() => {
                return Err(parse_err(format!("ragged feature row: {} values, expected {d}", feats.len())))
            }
            Some(_) => {}
        }
        rows.extend(feats);
    }
    let n = ids.names.len();
    let d = dim.unwrap_or(0);
    let features = Array2::from_shape_vec((n, d), rows).expect("row lengths checked");

    let mut edge_types = Interner::default();
    let mut edges = Vec::new();
    let text = read(edge_path)?;
    for (line, l) in data_lines(&text) {
        let cols = fields(edge_path, line, l, 3)?;
        let lookup = |id: &str| {
            ids.index.get(id).copied().ok_or_else(|| Error::Parse {
                path: edge_path.to_path_buf(),
                line,
                msg: format!("unknown node id {id:?}"),
            })
        };
        let a = lookup(cols[0])?;
        let b = lookup(cols[1])?;
        edges.push((a, b, edge_types.intern(cols[2])));
    }

    let parts = GraphParts {
        num_nodes: n,
        node_type,
        num_node_types: node_types.names.len(),
        edges,
        num_edge_types: edge_types.names.len().max(1),
        features,
    };
    let mut edge_type_names = edge_types.names;
    if edge_type_names.is_empty() {
        edge_type_names.push("r0".to_string());
    }
    let names = Names { node_ids: ids.names.clone(), node_types: node_types.names, edge_types: edge_type_names };
    let graph = HeteroGraph::with_names(parts, names)?;

    let labels = match label_path {
        Some(p) => Some(load_labels(p, &ids.index)?),
        None => None,
    };
    Ok(LoadedGraph { graph, labels })
}

/// Reads a node-level label file against an id table.
pub fn load_labels(path: &Path, ids: &HashMap<String, usize>) -> Result<LabelSet> {
    let mut classes = Interner::default();
    let mut labels = Vec::new();
    let mut seen = HashMap::new();
    let text = read(path)?;
    for (line, l) in data_lines(&text) {
        let cols = fields(path, line, l, 2)?;
        let err = |msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
        let id = *ids.get(cols[0]).ok_or_else(|| err(format!("unknown node id {:?}", cols[0])))?;
        if seen.insert(id, line).is_some() {
            return Err(err(format!("node {:?} labeled twice", cols[0])));
        }
        labels.push((id, classes.intern(cols[1])));
    }
    let mut set = LabelSet::new(LabelTarget::Node, labels, classes.names.len())?;
    set.class_names = classes.names;
    Ok(set)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes node and edge files. Each undirected edge is written once.
pub fn save_graph(graph: &HeteroGraph, node_path: &Path, edge_path: &Path) -> Result<()> {
    let names = graph.names();
    let mut out = String::new();
    for v in 0..graph.num_nodes() {
        let feats: Vec<String> = graph.features().row(v).iter().map(|x| x.to_string()).collect();
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            names.node_ids[v],
            names.node_types[graph.node_type(v)],
            feats.join(",")
        ));
    }
    write_file(node_path, &out)?;

    let mut out = String::new();
    for &(a, b, t) in graph.edges() {
        if a < b {
            out.push_str(&format!("{}\t{}\t{}\n", names.node_ids[a], names.node_ids[b], names.edge_types[t]));
        }
    }
    write_file(edge_path, &out)
}

pub fn save_labels(graph: &HeteroGraph, labels: &LabelSet, path: &Path) -> Result<()> {
    let mut out = String::new();
    for &(id, c) in &labels.labels {
        out.push_str(&format!("{}\t{}\n", graph.names().node_ids[id], labels.class_names[c]));
    }
    write_file(path, &out)
}
