//! Contrastive objectives, triplet sampling and optimization.
//!
//! Both objectives are temperature-scaled softmax losses over cosine
//! similarities: the link-prediction loss contrasts a linked node with an
//! unlinked one, the prompt-tuning loss contrasts a labeled instance's own
//! class prototype with every other prototype.

mod adam;
mod pretrain;
mod tune;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;

pub use adam::{Adam, AdamConfig};
pub use pretrain::{pretrain, ranking_accuracy, EpochLog, PretrainConfig, PretrainGraph, PretrainMode, PretrainObjective, PretrainOutcome};
pub use tune::{downstream_loss, prompt_tune, PromptGrads, TuneConfig, TuneData, TuneObjective, TuneOutcome};

/// `(v, a, b)` with `(v, a)` an edge and `(v, b)` not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub v: usize,
    pub a: usize,
    pub b: usize,
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::arg(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Link-prediction loss over `(sim(v,a), sim(v,b))` pairs, summed.
pub fn pretrain_loss(sims: &[(f64, f64)], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(sims.iter().map(|&(pos, neg)| softplus((neg - pos) / tau)).sum())
}

/// Loss together with `(∂L/∂sim(v,a), ∂L/∂sim(v,b))` per triplet.
pub fn pretrain_loss_grad(sims: &[(f64, f64)], tau: f64) -> Result<(f64, Vec<(f64, f64)>)> {
    check_tau(tau)?;
    let mut loss = 0.0;
    let grads = sims
        .iter()
        .map(|&(pos, neg)| {
            let x = (neg - pos) / tau;
            loss += softplus(x);
            let g = sigmoid(x) / tau;
            (-g, g)
        })
        .collect();
    Ok((loss, grads))
}

fn log_softmax_row(sims: &[f64], label: usize, tau: f64) -> Result<(f64, Vec<f64>)> {
    if label >= sims.len() {
        return Err(Error::arg(format!("label {label} outside {} prototypes", sims.len())));
    }
    let z: Vec<f64> = sims.iter().map(|s| s / tau).collect();
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    let loss = max + sum.ln() - z[label];
    let grad = exp
        .iter()
        .enumerate()
        .map(|(c, e)| (e / sum - if c == label { 1.0 } else { 0.0 }) / tau)
        .collect();
    Ok((loss, grad))
}

/// Prototype-contrast loss, summed over examples. `sims[i][c]` is the
/// similarity of example `i` to prototype `c`.
pub fn tune_loss(sims: &[Vec<f64>], labels: &[usize], tau: f64) -> Result<f64> {
    tune_loss_grad(sims, labels, tau).map(|(l, _)| l)
}

/// Loss together with `∂L/∂sims`.
pub fn tune_loss_grad(sims: &[Vec<f64>], labels: &[usize], tau: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    check_tau(tau)?;
    if sims.len() != labels.len() {
        return Err(Error::dim("one label per example required"));
    }
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(sims.len());
    for (row, &label) in sims.iter().zip(labels) {
        let (l, g) = log_softmax_row(row, label, tau)?;
        loss += l;
        grads.push(g);
    }
    Ok((loss, grads))
}

/// Draws `count` positive edges (excluding `holdout` pairs) and, for each,
/// `negatives_per_positive` uniformly random non-neighbors of the anchor.
/// Holdout pairs count as edges when drawing negatives. Anchors adjacent
/// to every other node are skipped and the positive is redrawn.
pub fn sample_triplets(
    graph: &HeteroGraph,
    count: usize,
    negatives_per_positive: usize,
    seed: u64,
    holdout: &[(usize, usize)],
) -> Result<Vec<Triplet>> {
    let hidden: HashSet<(usize, usize)> = holdout.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
    let linked = |a: usize, b: usize| graph.has_edge(a, b) || hidden.contains(&(a, b));
    let n = graph.num_nodes();
    let mut degree: Vec<usize> = (0..n).map(|v| graph.neighbors(v).len()).collect();
    for &(x, y) in &hidden {
        if x != y && x < n && y < n && !graph.has_edge(x, y) {
            degree[x] += 1;
        }
    }

    let positives: Vec<(usize, usize)> = graph
        .undirected_pairs()
        .into_iter()
        .filter(|p| !hidden.contains(p))
        .collect();
    if positives.is_empty() {
        return Err(Error::arg("no edges available for triplet sampling"));
    }
    let anchors_ok: Vec<bool> = degree.iter().map(|&d| d + 1 < n).collect();
    if !positives.iter().any(|&(a, b)| anchors_ok[a] || anchors_ok[b]) {
        return Err(Error::NoNegative("every edge endpoint is adjacent to all other nodes".into()));
    }
    if count == 0 || negatives_per_positive == 0 {
        return Ok(Vec::new());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count * negatives_per_positive);
    let mut drawn = 0;
    while drawn < count {
        let (x, y) = positives[rng.gen_range(0..positives.len())];
        let (v, a) = if rng.gen::<bool>() { (x, y) } else { (y, x) };
        if !anchors_ok[v] {
            continue;
        }
        for _ in 0..negatives_per_positive {
            let b = draw_non_neighbor(&mut rng, n, v, &linked);
            out.push(Triplet { v, a, b });
        }
        drawn += 1;
    }
    Ok(out)
}

/// Uniform draw from nodes other than `v` not linked to `v`. The caller
/// guarantees at least one exists.
fn draw_non_neighbor(rng: &mut ChaCha8Rng, n: usize, v: usize, linked: &impl Fn(usize, usize) -> bool) -> usize {
    for _ in 0..64 {
        let b = rng.gen_range(0..n);
        if b != v && !linked(v, b) {
            return b;
        }
    }
    let pool: Vec<usize> = (0..n).filter(|&b| b != v && !linked(v, b)).collect();
    *pool.choose(rng).expect("anchor has a non-neighbor")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphParts;
    use ndarray::Array2;

    fn graph(n: usize, pairs: &[(usize, usize)]) -> HeteroGraph {
        HeteroGraph::from_parts(GraphParts {
            num_nodes: n,
            node_type: vec![0; n],
            num_node_types: 1,
            edges: pairs.iter().map(|&(a, b)| (a, b, 0)).collect(),
            num_edge_types: 1,
            features: Array2::ones((n, 1)),
        })
        .unwrap()
    }

    #[test]
    fn pretrain_loss_values() {
        let l = pretrain_loss(&[(0.3, 0.3)], 0.2).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        let l = pretrain_loss(&[(1.0, 0.0)], 1.0).unwrap();
        assert!((l - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-15);
        assert!((l - 0.31326).abs() < 1e-5);
        assert!(pretrain_loss(&[(0.9, 0.1)], 1e-3).unwrap() < 1e-300);
        assert!(pretrain_loss(&[(1.0, 0.0)], 0.0).is_err());
        assert!(pretrain_loss(&[(1.0, 0.0)], -1.0).is_err());
    }

    #[test]
    fn tune_loss_values() {
        assert_eq!(tune_loss(&[vec![0.4]], &[0], 0.5).unwrap(), 0.0);
        let l = tune_loss(&[vec![0.2; 4]], &[3], 0.7).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        let l = tune_loss(&[vec![0.9, 0.1]], &[0], 1.0).unwrap();
        let expected = -(0.9f64.exp() / (0.9f64.exp() + 0.1f64.exp())).ln();
        assert!((l - expected).abs() < 1e-15);
        assert!((l - 0.37111).abs() < 1e-5);
        assert!(tune_loss(&[vec![0.9, 0.1]], &[2], 1.0).is_err());
    }

    #[test]
    fn loss_gradients_match_differences() {
        let sims = [(0.3, -0.2), (0.1, 0.8)];
        let (_, g) = pretrain_loss_grad(&sims, 0.5).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut p = sims;
            p[i].0 += h;
            let mut m = sims;
            m[i].0 -= h;
            let fd = (pretrain_loss(&p, 0.5).unwrap() - pretrain_loss(&m, 0.5).unwrap()) / (2.0 * h);
            assert!((fd - g[i].0).abs() < 1e-8);
        }
        let rows = vec![vec![0.3, -0.1, 0.5]];
        let (_, g) = tune_loss_grad(&rows, &[1], 0.3).unwrap();
        for c in 0..3 {
            let mut p = rows.clone();
            p[0][c] += h;
            let mut m = rows.clone();
            m[0][c] -= h;
            let fd = (tune_loss(&p, &[1], 0.3).unwrap() - tune_loss(&m, &[1], 0.3).unwrap()) / (2.0 * h);
            assert!((fd - g[0][c]).abs() < 1e-7);
        }
    }

    #[test]
    fn complete_graph_has_no_negatives() {
        let k3 = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        let err = sample_triplets(&k3, 5, 1, 0, &[]).unwrap_err();
        assert!(err.to_string().contains("no negative available"));
    }

    #[test]
    fn path_triplets_are_forced() {
        let path = graph(3, &[(0, 1), (1, 2)]);
        let ts = sample_triplets(&path, 50, 1, 3, &[]).unwrap();
        assert_eq!(ts.len(), 50);
        for t in ts {
            assert!(t == Triplet { v: 0, a: 1, b: 2 } || t == Triplet { v: 2, a: 1, b: 0 }, "{t:?}");
        }
    }

    #[test]
    fn triplets_respect_holdout_and_seed() {
        let pairs: Vec<_> = (0..9).map(|i| (i, i + 1)).chain([(0, 5), (2, 7)]).collect();
        let g = graph(10, &pairs);
        let holdout = [(0, 5), (3, 4)];
        let ts = sample_triplets(&g, 200, 2, 9, &holdout).unwrap();
        assert_eq!(ts.len(), 400);
        for t in &ts {
            assert!(g.has_edge(t.v, t.a));
            assert!(!g.has_edge(t.v, t.b) && t.v != t.b);
            for &(x, y) in &holdout {
                assert!(![(t.v, t.a), (t.v, t.b)].iter().any(|&p| p == (x, y) || p == (y, x)));
            }
        }
        assert_eq!(ts, sample_triplets(&g, 200, 2, 9, &holdout).unwrap());
    }
}
