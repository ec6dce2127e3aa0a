//! Stochastic-block-style heterogeneous graph generator.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{GraphParts, HeteroGraph, LabelSet, LabelTarget, Names};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_types: usize,
    pub nodes_per_type: usize,
    pub num_classes: usize,
    pub intra_edge_prob: f64,
    pub inter_edge_prob: f64,
    pub feature_dim: usize,
    pub class_signal: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_types: 2,
            nodes_per_type: 50,
            num_classes: 3,
            intra_edge_prob: 0.02,
            inter_edge_prob: 0.01,
            feature_dim: 8,
            class_signal: 2.0,
            seed: 0,
        }
    }
}

/// Index of the edge type connecting node types `a` and `b` (unordered).
fn pair_type(a: usize, b: usize, num_types: usize) -> usize {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    lo * num_types - lo * (lo + 1) / 2 + hi
}

/// Generates a typed block graph. Nodes of type 0 are the labeled targets;
/// their features are `class_signal * e_(class mod d)` plus unit Gaussian
/// noise, all other nodes carry pure noise. Each node pair is linked
/// independently with `intra_edge_prob` (same type) or `inter_edge_prob`.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<(HeteroGraph, LabelSet)> {
    if cfg.num_types == 0 || cfg.nodes_per_type == 0 || cfg.num_classes == 0 || cfg.feature_dim == 0 {
        return Err(Error::arg("synthetic graph counts must be >= 1"));
    }
    for p in [cfg.intra_edge_prob, cfg.inter_edge_prob] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::arg(format!("edge probability {p} outside [0, 1]")));
        }
    }
    if !cfg.class_signal.is_finite() {
        return Err(Error::arg("class_signal must be finite"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.num_types * cfg.nodes_per_type;
    let node_type: Vec<usize> = (0..n).map(|v| v / cfg.nodes_per_type).collect();

    let mut classes: Vec<usize> = (0..cfg.nodes_per_type).map(|i| i % cfg.num_classes).collect();
    classes.shuffle(&mut rng);

    let mut features = Array2::<f64>::zeros((n, cfg.feature_dim));
    for v in 0..n {
        for j in 0..cfg.feature_dim {
            features[[v, j]] = rng.sample(StandardNormal);
        }
    }
    for (v, &c) in classes.iter().enumerate() {
        features[[v, c % cfg.feature_dim]] += cfg.class_signal;
    }

    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let p = if node_type[a] == node_type[b] { cfg.intra_edge_prob } else { cfg.inter_edge_prob };
            if rng.gen::<f64>() < p {
                edges.push((a, b, pair_type(node_type[a], node_type[b], cfg.num_types)));
            }
        }
    }

    let num_edge_types = cfg.num_types * (cfg.num_types + 1) / 2;
    let parts = GraphParts {
        num_nodes: n,
        node_type,
        num_node_types: cfg.num_types,
        edges,
        num_edge_types,
        features,
    };
    let mut edge_names = vec![String::new(); num_edge_types];
    for a in 0..cfg.num_types {
        for b in a..cfg.num_types {
            edge_names[pair_type(a, b, cfg.num_types)] = format!("t{a}-t{b}");
        }
    }
    let names = Names {
        node_ids: (0..n).map(|v| format!("n{v}")).collect(),
        node_types: (0..cfg.num_types).map(|t| format!("t{t}")).collect(),
        edge_types: edge_names,
    };
    let graph = HeteroGraph::with_names(parts, names)?;
    let labels = LabelSet::new(LabelTarget::Node, classes.into_iter().enumerate().collect(), cfg.num_classes)?;
    Ok((graph, labels))
}
