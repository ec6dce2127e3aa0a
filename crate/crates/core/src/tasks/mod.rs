//! Few-shot episode construction and evaluation.

mod benchmark;
pub mod metrics;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, LabelSet, LabelTarget};
use crate::objectives::Triplet;

pub use benchmark::{run_benchmark, BenchmarkConfig, MetricReport, MetricStat, PromptSetting};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Nc,
    Gc,
    Lp,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Nc => "nc",
            TaskKind::Gc => "gc",
            TaskKind::Lp => "lp",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nc" => Ok(TaskKind::Nc),
            "gc" => Ok(TaskKind::Gc),
            "lp" => Ok(TaskKind::Lp),
            _ => Err(Error::arg(format!("unknown task kind {s:?} (expected nc, gc or lp)"))),
        }
    }
}

/// One link-prediction query: a target, its true neighbor and sampled
/// non-neighbors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkQuery {
    pub target: usize,
    pub positive: usize,
    pub negatives: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Episode {
    /// `(instance, class)` pairs; query classes are hidden from tuning.
    Classify { support: Vec<(usize, usize)>, query: Vec<(usize, usize)> },
    /// Exemplar links as triplets, and ranking queries.
    Link { support: Vec<Triplet>, query: Vec<LinkQuery> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotTask {
    pub kind: TaskKind,
    pub k: usize,
    pub episode: Episode,
}

impl FewShotTask {
    /// Support and query share no instance (classification) or no link
    /// (link prediction).
    pub fn is_disjoint(&self) -> bool {
        match &self.episode {
            Episode::Classify { support, query } => {
                let s: HashSet<usize> = support.iter().map(|p| p.0).collect();
                query.iter().all(|q| !s.contains(&q.0))
            }
            Episode::Link { support, query } => {
                let s: HashSet<(usize, usize)> =
                    support.iter().flat_map(|t| [(t.v, t.a), (t.a, t.v)]).collect();
                query.iter().all(|q| !s.contains(&(q.target, q.positive)))
            }
        }
    }
}

fn sample_classification(
    kind: TaskKind,
    labels: &LabelSet,
    k: usize,
    num_tasks: usize,
    seed: u64,
) -> Result<Vec<FewShotTask>> {
    if k == 0 {
        return Err(Error::arg("k must be >= 1"));
    }
    let groups = labels.by_class();
    for (class, members) in groups.iter().enumerate() {
        if members.len() < k + 1 {
            return Err(Error::ClassTooSmall { class, available: members.len(), needed: k + 1 });
        }
    }
    Ok((0..num_tasks)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let mut support = Vec::with_capacity(k * groups.len());
            let mut query = Vec::new();
            for (class, members) in groups.iter().enumerate() {
                let mut shuffled = members.clone();
                shuffled.shuffle(&mut rng);
                support.extend(shuffled[..k].iter().map(|&i| (i, class)));
                query.extend(shuffled[k..].iter().map(|&i| (i, class)));
            }
            query.sort_unstable();
            FewShotTask { kind, k, episode: Episode::Classify { support, query } }
        })
        .collect())
}

/// `num_tasks` node-classification episodes: `k` random supports per class,
/// every other labeled node as query.
pub fn sample_nc_tasks(labels: &LabelSet, k: usize, num_tasks: usize, seed: u64) -> Result<Vec<FewShotTask>> {
    if labels.target != LabelTarget::Node {
        return Err(Error::arg("node classification needs node-level labels"));
    }
    sample_classification(TaskKind::Nc, labels, k, num_tasks, seed)
}

/// Graph-classification episodes over a labeled graph collection.
pub fn sample_gc_tasks(labels: &LabelSet, k: usize, num_tasks: usize, seed: u64) -> Result<Vec<FewShotTask>> {
    if labels.target != LabelTarget::Graph {
        return Err(Error::arg("graph classification needs graph-level labels"));
    }
    sample_classification(TaskKind::Gc, labels, k, num_tasks, seed)
}

/// Links hidden from pre-training, split into exemplar, validation and test
/// pools.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkSplit {
    pub holdout: Vec<(usize, usize)>,
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkPool {
    Val,
    Test,
}

/// Holds out `fraction` of the undirected links. Of those, 5% become
/// exemplars, 5% validation and the rest test links (at least `k`, 1 and 1).
pub fn split_links(graph: &HeteroGraph, fraction: f64, k: usize, seed: u64) -> Result<LinkSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::arg(format!("holdout fraction {fraction} outside (0, 1)")));
    }
    let pairs = graph.undirected_pairs();
    let count = (pairs.len() as f64 * fraction).round() as usize;
    let n_train = ((count as f64 * 0.05).round() as usize).max(k.max(1));
    let n_val = ((count as f64 * 0.05).round() as usize).max(1);
    if count < n_train + n_val + 1 {
        return Err(Error::arg(format!(
            "holding out {count} of {} links leaves too few for {n_train} exemplar, {n_val} validation and 1 test link",
            pairs.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut holdout: Vec<(usize, usize)> = pairs.into_iter().choose_multiple(&mut rng, count);
    holdout.shuffle(&mut rng);
    let train = holdout[..n_train].to_vec();
    let val = holdout[n_train..n_train + n_val].to_vec();
    let test = holdout[n_train + n_val..].to_vec();
    holdout.sort_unstable();
    Ok(LinkSplit { holdout, train, val, test })
}

fn non_neighbors(graph: &HeteroGraph, v: usize) -> Vec<usize> {
    (0..graph.num_nodes()).filter(|&u| u != v && !graph.has_edge(v, u)).collect()
}

/// Link-prediction episodes. Each draws `k` exemplar links from the split's
/// training pool (with one random non-neighbor each, for the contrastive
/// loss) and `queries` links from `pool`, each paired with `negatives`
/// distinct non-neighbors of its target in `graph`.
#[allow(clippy::too_many_arguments)]
pub fn sample_lp_tasks(
    graph: &HeteroGraph,
    split: &LinkSplit,
    pool: LinkPool,
    k: usize,
    num_tasks: usize,
    negatives: usize,
    queries: usize,
    seed: u64,
) -> Result<Vec<FewShotTask>> {
    if k == 0 || negatives == 0 || queries == 0 {
        return Err(Error::arg("k, negatives and queries must be >= 1"));
    }
    if split.train.len() < k {
        return Err(Error::arg(format!("{} exemplar links for k = {k}", split.train.len())));
    }
    let pool = match pool {
        LinkPool::Val => &split.val,
        LinkPool::Test => &split.test,
    };
    if pool.is_empty() {
        return Err(Error::arg("empty query pool"));
    }
    (0..num_tasks)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let orient = |rng: &mut ChaCha8Rng, (x, y): (usize, usize)| if rng.gen::<bool>() { (x, y) } else { (y, x) };

            let mut support = Vec::with_capacity(k);
            for &pair in split.train.choose_multiple(&mut rng, k) {
                let (mut v, mut a) = orient(&mut rng, pair);
                let mut candidates = non_neighbors(graph, v);
                if candidates.is_empty() {
                    (v, a) = (a, v);
                    candidates = non_neighbors(graph, v);
                }
                let b = *candidates
                    .choose(&mut rng)
                    .ok_or_else(|| Error::NoNegative(format!("exemplar link ({v}, {a})")))?;
                support.push(Triplet { v, a, b });
            }

            let mut query = Vec::with_capacity(queries.min(pool.len()));
            for &pair in pool.choose_multiple(&mut rng, queries.min(pool.len())) {
                let (target, positive) = orient(&mut rng, pair);
                let candidates = non_neighbors(graph, target);
                if candidates.len() < negatives {
                    return Err(Error::NoNegative(format!(
                        "node {target} has {} non-neighbors, {negatives} needed",
                        candidates.len()
                    )));
                }
                let mut negs: Vec<usize> = candidates.choose_multiple(&mut rng, negatives).copied().collect();
                negs.sort_unstable();
                query.push(LinkQuery { target, positive, negatives: negs });
            }
            Ok(FewShotTask { kind: TaskKind::Lp, k, episode: Episode::Link { support, query } })
        })
        .collect()
}
