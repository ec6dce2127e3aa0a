//! Episode-level tuning and scoring against a frozen encoder.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::metrics::{auc_one_vs_negatives, mean_std, micro_macro_f1, ndcg_with_ties};
use super::{sample_gc_tasks, sample_lp_tasks, sample_nc_tasks, split_links, Episode, FewShotTask, LinkPool, LinkSplit, TaskKind};
use crate::derive_seed;
use crate::embedding::{class_prototypes, classify, cosine_sim, embed_readouts, InstanceIndex, InstanceMode, PromptPair};
use crate::encoder::{encode_all, EncodedViews, EncoderParams};
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, LabelSet};
use crate::objectives::{prompt_tune, TuneConfig, TuneData, TuneObjective};
use crate::template::{context_subgraph, ego_networks, graph_template, Subgraph};

const VAL_STREAM: u64 = 2;
const EVAL_STREAM: u64 = 3;
const SPLIT_STREAM: u64 = 4;

/// Whether downstream prompts are tuned or left at the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptSetting {
    Tuned,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub kind: TaskKind,
    pub k: usize,
    /// Evaluation episodes.
    pub num_tasks: usize,
    /// Validation episodes used to pick the tuning length; 0 disables
    /// selection and tunes for `tune.epochs`.
    pub val_tasks: usize,
    pub delta: usize,
    pub tune: TuneConfig,
    pub prompts: PromptSetting,
    pub lp_negatives: usize,
    pub lp_holdout: f64,
    pub lp_queries: usize,
    /// Worker cap; 0 uses every available core.
    pub threads: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            kind: TaskKind::Nc,
            k: 1,
            num_tasks: 100,
            val_tasks: 100,
            delta: 1,
            tune: TuneConfig::default(),
            prompts: PromptSetting::Tuned,
            lp_negatives: 10,
            lp_holdout: 0.1,
            lp_queries: 20,
            threads: 0,
            seed: 0,
        }
    }
}

impl BenchmarkConfig {
    /// Links concealed from pre-training for link-prediction runs. The
    /// pre-training step must hide the same split's `holdout` pairs.
    pub fn link_split(&self, graph: &HeteroGraph) -> Result<LinkSplit> {
        split_links(graph, self.lp_holdout, self.k, derive_seed(self.seed, SPLIT_STREAM))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricStat {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub per_task: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub kind: TaskKind,
    pub k: usize,
    pub prompts: PromptSetting,
    pub metrics: Vec<MetricStat>,
    pub num_tasks: usize,
    pub selected_epochs: usize,
    pub config_hash: String,
}

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<&MetricStat> {
        self.metrics.iter().find(|m| m.name == name)
    }

    /// `metric  mean  std  num_tasks` rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tmean\tstd\tnum_tasks\n");
        for m in &self.metrics {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", m.name, m.mean, m.std, self.num_tasks);
        }
        out
    }

    /// `key = value` summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "task = {}", self.kind);
        let _ = writeln!(out, "k = {}", self.k);
        let _ = writeln!(
            out,
            "prompts = {}",
            match self.prompts {
                PromptSetting::Tuned => "tuned",
                PromptSetting::Identity => "identity",
            }
        );
        let _ = writeln!(out, "num_tasks = {}", self.num_tasks);
        let _ = writeln!(out, "selected_epochs = {}", self.selected_epochs);
        let _ = writeln!(out, "config_hash = {}", self.config_hash);
        for m in &self.metrics {
            let _ = writeln!(out, "{}.mean = {}", m.name, m.mean);
            let _ = writeln!(out, "{}.std = {}", m.name, m.std);
        }
        out
    }
}

fn metric_names(kind: TaskKind) -> [&'static str; 2] {
    match kind {
        TaskKind::Nc | TaskKind::Gc => ["micro_f1", "macro_f1"],
        TaskKind::Lp => ["auc", "ndcg"],
    }
}

/// Frozen readouts keyed by instance id (labeled node, ego network, or
/// link endpoint).
struct Instances {
    readouts: BTreeMap<usize, Array2<f64>>,
    num_classes: usize,
}

impl Instances {
    fn get(&self, id: usize) -> &Array2<f64> {
        &self.readouts[&id]
    }
}

fn readouts_for(graph: &HeteroGraph, encoded: &EncodedViews, subs: Vec<(usize, Subgraph)>) -> Result<BTreeMap<usize, Array2<f64>>> {
    subs.into_par_iter()
        .map(|(id, sub)| Ok((id, InstanceIndex::new(&sub, graph, encoded)?.readouts(encoded))))
        .collect()
}

/// Prepares episodes and runs them on the frozen `params`.
pub fn run_benchmark(graph: &HeteroGraph, labels: Option<&LabelSet>, params: &EncoderParams, cfg: &BenchmarkConfig) -> Result<MetricReport> {
    if params.input_dim() != graph.feature_dim() {
        return Err(Error::dim(format!(
            "checkpoint expects {} input features, graph has {}",
            params.input_dim(),
            graph.feature_dim()
        )));
    }
    if cfg.num_tasks == 0 {
        return Err(Error::arg("num_tasks must be >= 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::arg(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(graph, labels, params, cfg))
}

fn run_inner(graph: &HeteroGraph, labels: Option<&LabelSet>, params: &EncoderParams, cfg: &BenchmarkConfig) -> Result<MetricReport> {
    let val_seed = derive_seed(cfg.seed, VAL_STREAM);
    let eval_seed = derive_seed(cfg.seed, EVAL_STREAM);
    let (val, eval, instances) = match cfg.kind {
        TaskKind::Nc | TaskKind::Gc => {
            let labels = labels.ok_or_else(|| Error::arg("classification needs a label file"))?;
            labels.check_within(graph.num_nodes())?;
            let encoded = encode_all(&graph_template(graph), graph, params)?;
            let (subs, set) = if cfg.kind == TaskKind::Nc {
                let subs = labels
                    .labels
                    .iter()
                    .map(|&(v, _)| Ok((v, context_subgraph(graph, v, cfg.delta)?)))
                    .collect::<Result<Vec<_>>>()?;
                (subs, labels.clone())
            } else {
                let (egos, set) = ego_networks(graph, labels, cfg.delta)?;
                (egos.into_iter().enumerate().collect(), set)
            };
            let sampler = if cfg.kind == TaskKind::Nc { sample_nc_tasks } else { sample_gc_tasks };
            let val = sampler(&set, cfg.k, cfg.val_tasks, val_seed)?;
            let eval = sampler(&set, cfg.k, cfg.num_tasks, eval_seed)?;
            let readouts = readouts_for(graph, &encoded, subs)?;
            (val, eval, Instances { readouts, num_classes: set.num_classes })
        }
        TaskKind::Lp => {
            let split = cfg.link_split(graph)?;
            let visible = graph.without_pairs(&split.holdout);
            let encoded = encode_all(&graph_template(&visible), &visible, params)?;
            let lp = |pool, n, seed| sample_lp_tasks(graph, &split, pool, cfg.k, n, cfg.lp_negatives, cfg.lp_queries, seed);
            let val = lp(LinkPool::Val, cfg.val_tasks, val_seed)?;
            let eval = lp(LinkPool::Test, cfg.num_tasks, eval_seed)?;
            let mut ids = BTreeSet::new();
            for t in val.iter().chain(&eval) {
                if let Episode::Link { support, query } = &t.episode {
                    ids.extend(support.iter().flat_map(|t| [t.v, t.a, t.b]));
                    ids.extend(query.iter().flat_map(|q| q.negatives.iter().copied().chain([q.target, q.positive])));
                }
            }
            let subs = ids
                .into_iter()
                .map(|v| Ok((v, context_subgraph(&visible, v, cfg.delta)?)))
                .collect::<Result<Vec<_>>>()?;
            let readouts = readouts_for(&visible, &encoded, subs)?;
            (val, eval, Instances { readouts, num_classes: 0 })
        }
    };

    let selected_epochs = match cfg.prompts {
        PromptSetting::Identity => 0,
        PromptSetting::Tuned if val.is_empty() => cfg.tune.epochs,
        PromptSetting::Tuned => select_epochs(&val, &instances, cfg)?,
    };

    let scores: Vec<[f64; 2]> = eval
        .par_iter()
        .map(|task| {
            let tune = TuneConfig { epochs: selected_epochs, ..cfg.tune };
            let prompts = episode_prompts(task, &instances, &tune, &[])?.0;
            score_episode(task, &instances, &prompts)
        })
        .collect::<Result<_>>()?;

    let metrics = metric_names(cfg.kind)
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let per_task: Vec<f64> = scores.iter().map(|s| s[i]).collect();
            let (mean, std) = mean_std(&per_task);
            MetricStat { name: name.to_string(), mean, std, per_task }
        })
        .collect();
    let hashed = BenchmarkConfig { threads: 0, ..cfg.clone() };
    let digest = Sha256::digest(format!("{hashed:?}|{}", params.checksum()).as_bytes());
    Ok(MetricReport {
        kind: cfg.kind,
        k: cfg.k,
        prompts: cfg.prompts,
        metrics,
        num_tasks: eval.len(),
        selected_epochs,
        config_hash: digest.iter().take(8).map(|b| format!("{b:02x}")).collect(),
    })
}

/// Tuning length with the best mean validation score on the first metric,
/// among quarter points of the configured budget; ties go to the shortest.
fn select_epochs(val: &[FewShotTask], instances: &Instances, cfg: &BenchmarkConfig) -> Result<usize> {
    let e = cfg.tune.epochs;
    let mut candidates: Vec<usize> = vec![0, e / 4, e / 2, 3 * e / 4, e];
    candidates.dedup();
    let per_task: Vec<Vec<f64>> = val
        .par_iter()
        .map(|task| {
            let (_, snapshots) = episode_prompts(task, instances, &cfg.tune, &candidates)?;
            snapshots
                .iter()
                .map(|(_, p)| score_episode(task, instances, p).map(|s| s[0]))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut best = (candidates[0], f64::NEG_INFINITY);
    for (c, &epochs) in candidates.iter().enumerate() {
        let mean = per_task.iter().map(|s| s[c]).sum::<f64>() / per_task.len() as f64;
        if mean > best.1 {
            best = (epochs, mean);
        }
    }
    Ok(best.0)
}

fn tune_data(task: &FewShotTask, instances: &Instances) -> TuneData {
    match &task.episode {
        Episode::Classify { support, .. } => TuneData {
            readouts: support.iter().map(|&(i, _)| instances.get(i).clone()).collect(),
            objective: TuneObjective::Classify {
                labels: support.iter().map(|s| s.1).collect(),
                num_classes: instances.num_classes,
            },
        },
        Episode::Link { support, .. } => {
            let mut slots: BTreeMap<usize, usize> = BTreeMap::new();
            let mut readouts = Vec::new();
            let mut slot = |v: usize| {
                *slots.entry(v).or_insert_with(|| {
                    readouts.push(instances.get(v).clone());
                    readouts.len() - 1
                })
            };
            let triplets = support.iter().map(|t| (slot(t.v), slot(t.a), slot(t.b))).collect();
            TuneData { readouts, objective: TuneObjective::Link { triplets } }
        }
    }
}

fn episode_prompts(
    task: &FewShotTask,
    instances: &Instances,
    tune: &TuneConfig,
    snapshots: &[usize],
) -> Result<(PromptPair, Vec<(usize, PromptPair)>)> {
    let data = tune_data(task, instances);
    let out = prompt_tune(&data, tune, snapshots)?;
    Ok((out.prompts, out.snapshots))
}

fn embed(instances: &Instances, id: usize, prompts: &PromptPair) -> Array1<f64> {
    embed_readouts(instances.get(id).view(), prompts, InstanceMode::Templated)
}

fn score_episode(task: &FewShotTask, instances: &Instances, prompts: &PromptPair) -> Result<[f64; 2]> {
    match &task.episode {
        Episode::Classify { support, query } => {
            let mut groups = vec![Vec::new(); instances.num_classes];
            for &(i, c) in support {
                groups[c].push(embed(instances, i, prompts));
            }
            let protos = class_prototypes(&groups)?;
            let preds: Vec<usize> = query.iter().map(|&(i, _)| classify(embed(instances, i, prompts).view(), &protos)).collect();
            let truths: Vec<usize> = query.iter().map(|q| q.1).collect();
            let (micro, macro_) = micro_macro_f1(&preds, &truths, instances.num_classes)?;
            Ok([micro, macro_])
        }
        Episode::Link { query, .. } => {
            let (mut auc, mut ndcg) = (0.0, 0.0);
            for q in query {
                let t = embed(instances, q.target, prompts);
                let pos = cosine_sim(t.view(), embed(instances, q.positive, prompts).view());
                let negs: Vec<f64> = q.negatives.iter().map(|&n| cosine_sim(t.view(), embed(instances, n, prompts).view())).collect();
                auc += auc_one_vs_negatives(pos, &negs);
                ndcg += ndcg_with_ties(pos, &negs);
            }
            let n = query.len() as f64;
            Ok([auc / n, ndcg / n])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::init_params;
    use crate::graph::{gen_synthetic, SynthConfig};

    fn small_cfg(kind: TaskKind) -> BenchmarkConfig {
        BenchmarkConfig {
            kind,
            num_tasks: 6,
            val_tasks: 4,
            tune: TuneConfig { epochs: 20, ..TuneConfig::default() },
            ..BenchmarkConfig::default()
        }
    }

    fn fixture() -> (HeteroGraph, LabelSet, EncoderParams) {
        let (g, l) = gen_synthetic(&SynthConfig { nodes_per_type: 30, intra_edge_prob: 0.1, inter_edge_prob: 0.05, ..SynthConfig::default() }).unwrap();
        let p = init_params(g.feature_dim(), 8, 2, 3).unwrap();
        (g, l, p)
    }

    #[test]
    fn all_kinds_run_and_stay_in_range() {
        let (g, l, p) = fixture();
        for kind in [TaskKind::Nc, TaskKind::Gc, TaskKind::Lp] {
            let report = run_benchmark(&g, Some(&l), &p, &small_cfg(kind)).unwrap();
            assert_eq!(report.num_tasks, 6);
            for m in &report.metrics {
                assert!((0.0..=1.0).contains(&m.mean), "{kind} {} = {}", m.name, m.mean);
                assert!(m.std >= 0.0);
                assert_eq!(m.per_task.len(), 6);
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let (g, l, p) = fixture();
        let one = run_benchmark(&g, Some(&l), &p, &BenchmarkConfig { threads: 1, ..small_cfg(TaskKind::Nc) }).unwrap();
        let four = run_benchmark(&g, Some(&l), &p, &BenchmarkConfig { threads: 4, ..small_cfg(TaskKind::Nc) }).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn identity_setting_skips_tuning() {
        let (g, l, p) = fixture();
        let report = run_benchmark(&g, Some(&l), &p, &BenchmarkConfig { prompts: PromptSetting::Identity, ..small_cfg(TaskKind::Nc) }).unwrap();
        assert_eq!(report.selected_epochs, 0);
        assert!(report.summary().contains("prompts = identity"));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let (g, l, _) = fixture();
        let p = init_params(g.feature_dim() + 1, 8, 2, 3).unwrap();
        assert!(matches!(run_benchmark(&g, Some(&l), &p, &small_cfg(TaskKind::Nc)), Err(Error::Dimension(_))));
    }
}
