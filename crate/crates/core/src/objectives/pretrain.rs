//! Link-prediction pre-training of the encoder.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};

use super::{pretrain_loss_grad, sample_triplets, Adam, AdamConfig, Triplet};
use crate::embedding::{cosine_with_grad, embed_readouts, embed_readouts_backward, InstanceIndex, InstanceMode, PromptPair};
use crate::encoder::{encode_all, init_params, EncoderParams};
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::template::{context_subgraph, graph_template, HomoView};
use crate::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PretrainMode {
    /// Types ignored: the encoder sees only the full topology and instances
    /// are read out directly.
    Plain,
    /// The graph template is applied and instances are aggregated over views.
    Templated,
}

impl PretrainMode {
    pub fn instance_mode(self) -> InstanceMode {
        match self {
            PretrainMode::Plain => InstanceMode::Direct,
            PretrainMode::Templated => InstanceMode::Templated,
        }
    }

    /// Views the encoder runs on for this mode.
    pub fn views(self, graph: &HeteroGraph) -> Vec<HomoView> {
        let mut views = graph_template(graph);
        if self == PretrainMode::Plain {
            views.truncate(1);
        }
        views
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub tau: f64,
    pub delta: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub negatives_per_positive: usize,
    /// Positive draws per graph; 0 means one per available edge.
    pub triplets: usize,
    /// Fraction of sampled triplets held out for checkpoint selection.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 100,
            lr: 1e-3,
            tau: 1.0,
            delta: 1,
            hidden_dim: 64,
            num_layers: 3,
            negatives_per_positive: 1,
            triplets: 0,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

/// A pre-training graph and the undirected pairs hidden from it.
#[derive(Debug, Clone, Copy)]
pub struct PretrainGraph<'a> {
    pub graph: &'a HeteroGraph,
    pub holdout: &'a [(usize, usize)],
}

/// Mean per-triplet losses evaluated at the weights entering `epoch`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    /// Weights with the lowest validation loss.
    pub params: EncoderParams,
    pub best_epoch: usize,
    /// One row per epoch plus a final row for the weights after the last step.
    pub curve: Vec<EpochLog>,
}

impl PretrainOutcome {
    pub fn initial_loss(&self) -> f64 {
        self.curve[0].loss
    }

    pub fn final_loss(&self) -> f64 {
        self.curve.last().expect("curve is never empty").loss
    }
}

/// Triplets over instance slots.
type SlotTriplet = (usize, usize, usize);

struct Prepared {
    graph: HeteroGraph,
    views: Vec<HomoView>,
    instances: Vec<InstanceIndex>,
    train: Vec<SlotTriplet>,
    val: Vec<SlotTriplet>,
}

fn prepare(input: PretrainGraph<'_>, mode: PretrainMode, cfg: &PretrainConfig, seed: u64) -> Result<Prepared> {
    if mode == PretrainMode::Templated && input.graph.num_node_types() < 2 {
        log_warning("templated pre-training on a homogeneous graph duplicates its only view");
    }
    let graph = input.graph.without_pairs(input.holdout);
    let count = if cfg.triplets == 0 { graph.undirected_pairs().len() } else { cfg.triplets };
    let triplets = sample_triplets(input.graph, count, cfg.negatives_per_positive, seed, input.holdout)?;

    let views = mode.views(&graph);
    let mut slots = BTreeMap::new();
    for t in &triplets {
        for v in [t.v, t.a, t.b] {
            let next = slots.len();
            slots.entry(v).or_insert(next);
        }
    }
    let mut instances = vec![None; slots.len()];
    for (&v, &slot) in &slots {
        let sub = context_subgraph(&graph, v, cfg.delta)?;
        instances[slot] = Some(InstanceIndex::from_views(&sub, &graph, &views)?);
    }
    let instances = instances.into_iter().map(|i| i.expect("every slot filled")).collect();

    let as_slots = |t: &Triplet| (slots[&t.v], slots[&t.a], slots[&t.b]);
    let num_val = if triplets.len() >= 2 {
        ((triplets.len() as f64 * cfg.val_fraction).round() as usize).clamp(usize::from(cfg.val_fraction > 0.0), triplets.len() - 1)
    } else {
        0
    };
    let split = triplets.len() - num_val;
    Ok(Prepared {
        train: triplets[..split].iter().map(as_slots).collect(),
        val: triplets[split..].iter().map(as_slots).collect(),
        graph,
        views,
        instances,
    })
}

fn log_warning(msg: &str) {
    eprintln!("warning: {msg}");
}

/// Loss over slot triplets and `∂L/∂s` per slot.
pub(crate) fn triplet_objective(embs: &[Array1<f64>], triplets: &[SlotTriplet], tau: f64, want_grad: bool) -> Result<(f64, Vec<Array1<f64>>)> {
    let dim = embs.first().map_or(0, |e| e.len());
    let mut sims = Vec::with_capacity(triplets.len());
    let mut parts = Vec::with_capacity(triplets.len());
    for &(v, a, b) in triplets {
        let (sa, gva, gav) = cosine_with_grad(embs[v].view(), embs[a].view());
        let (sb, gvb, gbv) = cosine_with_grad(embs[v].view(), embs[b].view());
        sims.push((sa, sb));
        if want_grad {
            parts.push((gva, gav, gvb, gbv));
        }
    }
    let (loss, dsims) = pretrain_loss_grad(&sims, tau)?;
    let mut ds = vec![Array1::zeros(dim); if want_grad { embs.len() } else { 0 }];
    if want_grad {
        for (((v, a, b), (da, db)), (gva, gav, gvb, gbv)) in triplets.iter().zip(&dsims).zip(parts) {
            ds[*v].scaled_add(*da, &gva);
            ds[*a].scaled_add(*da, &gav);
            ds[*v].scaled_add(*db, &gvb);
            ds[*b].scaled_add(*db, &gbv);
        }
    }
    Ok((loss, ds))
}

struct EpochEval {
    loss: f64,
    val_loss: f64,
    grads: Vec<Array2<f64>>,
}

fn evaluate(prepared: &[Prepared], params: &EncoderParams, mode: PretrainMode, tau: f64) -> Result<EpochEval> {
    let instance_mode = mode.instance_mode();
    let n_train: usize = prepared.iter().map(|p| p.train.len()).sum();
    let n_val: usize = prepared.iter().map(|p| p.val.len()).sum();
    let mut loss = 0.0;
    let mut val_loss = 0.0;
    let mut grads = params.zeros_like();
    for p in prepared {
        let encoded = encode_all(&p.views, &p.graph, params)?;
        let identity = PromptPair::identity(params.hidden_dim(), p.views.len());
        let readouts: Vec<Array2<f64>> = p.instances.iter().map(|i| i.readouts(&encoded)).collect();
        let embs: Vec<Array1<f64>> =
            readouts.iter().map(|r| embed_readouts(r.view(), &identity, instance_mode)).collect();

        let (l, ds) = triplet_objective(&embs, &p.train, tau, true)?;
        loss += l;
        val_loss += triplet_objective(&embs, &p.val, tau, false)?.0;

        let mut adjoints = encoded.zero_adjoints();
        for ((inst, r), d) in p.instances.iter().zip(&readouts).zip(&ds) {
            let g = embed_readouts_backward(r.view(), &identity, instance_mode, d.view());
            inst.scatter_readout_grad(g.readouts.view(), &mut adjoints);
        }
        for (acc, g) in grads.iter_mut().zip(encoded.backward(&adjoints, params)?) {
            *acc += &g;
        }
    }
    let scale = 1.0 / n_train.max(1) as f64;
    grads.iter_mut().for_each(|g| *g *= scale);
    let loss = loss * scale;
    let val_loss = if n_val > 0 { val_loss / n_val as f64 } else { loss };
    if !loss.is_finite() || !val_loss.is_finite() {
        return Err(Error::NonFinite(format!("pre-training loss {loss}, validation loss {val_loss}")));
    }
    Ok(EpochEval { loss, val_loss, grads })
}

/// The sampled pre-training problem: triplets and instances per graph.
pub struct PretrainObjective {
    prepared: Vec<Prepared>,
    mode: PretrainMode,
    tau: f64,
}

impl PretrainObjective {
    /// Samples triplets exactly as [`pretrain`] does for `cfg`.
    pub fn new(graphs: &[PretrainGraph<'_>], mode: PretrainMode, cfg: &PretrainConfig) -> Result<Self> {
        let prepared = graphs
            .iter()
            .enumerate()
            .map(|(i, g)| prepare(*g, mode, cfg, derive_seed(cfg.seed, 100 + i as u64)))
            .collect::<Result<Vec<_>>>()?;
        if prepared.iter().all(|p| p.train.is_empty()) {
            return Err(Error::arg("no training triplets"));
        }
        Ok(PretrainObjective { prepared, mode, tau: cfg.tau })
    }

    /// Mean training loss and its gradient with respect to every weight.
    pub fn loss_and_grad(&self, params: &EncoderParams) -> Result<(f64, Vec<Array2<f64>>)> {
        let eval = evaluate(&self.prepared, params, self.mode, self.tau)?;
        Ok((eval.loss, eval.grads))
    }

    pub fn val_loss(&self, params: &EncoderParams) -> Result<f64> {
        Ok(evaluate(&self.prepared, params, self.mode, self.tau)?.val_loss)
    }
}

/// Pre-trains a fresh encoder on link prediction and returns the
/// best-validation weights together with the loss curve.
pub fn pretrain(graphs: &[PretrainGraph<'_>], mode: PretrainMode, cfg: &PretrainConfig) -> Result<PretrainOutcome> {
    let first = graphs.first().ok_or_else(|| Error::arg("no pre-training graphs"))?;
    let feature_dim = first.graph.feature_dim();
    if graphs.iter().any(|g| g.graph.feature_dim() != feature_dim) {
        return Err(Error::dim("pre-training graphs differ in feature dimension"));
    }
    if !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(Error::arg("val_fraction must lie in [0, 1)"));
    }
    let mut params = init_params(feature_dim, cfg.hidden_dim, cfg.num_layers, derive_seed(cfg.seed, 1))?;
    let objective = PretrainObjective::new(graphs, mode, cfg)?;

    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut curve = Vec::with_capacity(cfg.epochs + 1);
    let mut best = (f64::INFINITY, 0usize, params.clone());
    for epoch in 0..=cfg.epochs {
        let eval = evaluate(&objective.prepared, &params, mode, cfg.tau)?;
        curve.push(EpochLog { epoch, loss: eval.loss, val_loss: eval.val_loss });
        if eval.val_loss < best.0 {
            best = (eval.val_loss, epoch, params.clone());
        }
        if epoch == cfg.epochs {
            break;
        }
        let mut slices: Vec<&mut [f64]> = params
            .layers
            .iter_mut()
            .map(|w| w.as_slice_mut().expect("standard layout"))
            .collect();
        let grads: Vec<&[f64]> = eval.grads.iter().map(|g| g.as_slice().expect("standard layout")).collect();
        adam.step(&mut slices, &grads)?;
    }
    let (_, best_epoch, params) = best;
    Ok(PretrainOutcome { params, best_epoch, curve })
}

/// Fraction of triplets with `sim(v, a) > sim(v, b)` under identity prompts.
pub fn ranking_accuracy(
    graph: &HeteroGraph,
    params: &EncoderParams,
    triplets: &[Triplet],
    mode: PretrainMode,
    delta: usize,
) -> Result<f64> {
    if triplets.is_empty() {
        return Err(Error::arg("no triplets to rank"));
    }
    let views = mode.views(graph);
    let encoded = encode_all(&views, graph, params)?;
    let identity = PromptPair::identity(params.hidden_dim(), views.len());
    let mut cache: BTreeMap<usize, Array1<f64>> = BTreeMap::new();
    let mut embed = |v: usize| -> Result<Array1<f64>> {
        if let Some(e) = cache.get(&v) {
            return Ok(e.clone());
        }
        let sub = context_subgraph(graph, v, delta)?;
        let idx = InstanceIndex::from_views(&sub, graph, &views)?;
        let e = embed_readouts(idx.readouts(&encoded).view(), &identity, mode.instance_mode());
        cache.insert(v, e.clone());
        Ok(e)
    };
    let mut correct = 0usize;
    for t in triplets {
        let (sv, sa, sb) = (embed(t.v)?, embed(t.a)?, embed(t.b)?);
        let pos = crate::embedding::cosine_sim(sv.view(), sa.view());
        let neg = crate::embedding::cosine_sim(sv.view(), sb.view());
        if pos > neg {
            correct += 1;
        }
    }
    Ok(correct as f64 / triplets.len() as f64)
}
