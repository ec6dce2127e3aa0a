//! Prompt tuning against a frozen encoder.
//!
//! The encoder is consulted once to produce per-view readouts for every
//! support instance; after that only the prompt pair moves. Prototypes are
//! rebuilt from the prompted support embeddings at every step, and the
//! gradient flows through them.

use ndarray::{Array1, Array2};

use super::pretrain::triplet_objective;
use super::{tune_loss_grad, Adam, AdamConfig};
use crate::embedding::{class_prototypes, cosine_with_grad, embed_readouts, embed_readouts_backward, InstanceMode, PromptPair};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TuneObjective {
    /// Prototype contrast; `labels[i]` is the class of instance `i`.
    Classify { labels: Vec<usize>, num_classes: usize },
    /// Link contrast over `(v, a, b)` instance indices.
    Link { triplets: Vec<(usize, usize, usize)> },
}

/// Frozen-encoder readouts (views × hidden) for each support instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneData {
    pub readouts: Vec<Array2<f64>>,
    pub objective: TuneObjective,
}

impl TuneData {
    pub fn hidden_dim(&self) -> usize {
        self.readouts.first().map_or(0, |r| r.ncols())
    }

    pub fn num_views(&self) -> usize {
        self.readouts.first().map_or(0, |r| r.nrows())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneConfig {
    pub epochs: usize,
    pub lr: f64,
    pub tau: f64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig { epochs: 200, lr: 1e-2, tau: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptGrads {
    pub feat: Array1<f64>,
    pub het: Array1<f64>,
}

/// Downstream loss (summed over support examples) and its prompt gradients.
pub fn downstream_loss(data: &TuneData, prompts: &PromptPair, tau: f64) -> Result<(f64, PromptGrads)> {
    if data.readouts.is_empty() {
        return Err(Error::arg("empty support set"));
    }
    let (hidden, views) = (data.hidden_dim(), data.num_views());
    if data.readouts.iter().any(|r| r.dim() != (views, hidden)) {
        return Err(Error::dim("support readouts differ in shape"));
    }
    if prompts.feat.len() != hidden || prompts.het.len() != views {
        return Err(Error::dim(format!(
            "prompts ({}, {}) do not match readouts ({hidden}, {views})",
            prompts.feat.len(),
            prompts.het.len()
        )));
    }
    let mode = InstanceMode::Templated;
    let embs: Vec<Array1<f64>> = data.readouts.iter().map(|r| embed_readouts(r.view(), prompts, mode)).collect();

    let (loss, ds) = match &data.objective {
        TuneObjective::Classify { labels, num_classes } => classify_objective(&embs, labels, *num_classes, tau)?,
        TuneObjective::Link { triplets } => {
            if let Some(&t) = triplets.iter().find(|t| t.0.max(t.1).max(t.2) >= embs.len()) {
                return Err(Error::arg(format!("triplet {t:?} references a missing instance")));
            }
            triplet_objective(&embs, triplets, tau, true)?
        }
    };

    let mut grads = PromptGrads { feat: Array1::zeros(hidden), het: Array1::zeros(views) };
    for (r, d) in data.readouts.iter().zip(&ds) {
        let g = embed_readouts_backward(r.view(), prompts, mode, d.view());
        grads.feat += &g.feat;
        grads.het += &g.het;
    }
    Ok((loss, grads))
}

fn classify_objective(
    embs: &[Array1<f64>],
    labels: &[usize],
    num_classes: usize,
    tau: f64,
) -> Result<(f64, Vec<Array1<f64>>)> {
    if labels.len() != embs.len() {
        return Err(Error::dim("one label per support instance required"));
    }
    let mut groups = vec![Vec::new(); num_classes];
    let mut members = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(Error::arg(format!("label {y} outside {num_classes} classes")));
        }
        groups[y].push(embs[i].clone());
        members[y].push(i);
    }
    let protos = class_prototypes(&groups)?;

    let mut sims = Vec::with_capacity(embs.len());
    let mut partials = Vec::with_capacity(embs.len());
    for e in embs {
        let (row, g): (Vec<f64>, Vec<_>) = protos
            .iter()
            .map(|p| {
                let (s, ge, gp) = cosine_with_grad(e.view(), p.view());
                (s, (ge, gp))
            })
            .unzip();
        sims.push(row);
        partials.push(g);
    }
    let (loss, dsims) = tune_loss_grad(&sims, labels, tau)?;

    let dim = embs[0].len();
    let mut ds = vec![Array1::zeros(dim); embs.len()];
    let mut dprotos = vec![Array1::<f64>::zeros(dim); num_classes];
    for (i, (row, parts)) in dsims.iter().zip(&partials).enumerate() {
        for (c, (ge, gp)) in parts.iter().enumerate() {
            ds[i].scaled_add(row[c], ge);
            dprotos[c].scaled_add(row[c], gp);
        }
    }
    for (c, idx) in members.iter().enumerate() {
        let share = 1.0 / idx.len() as f64;
        for &i in idx {
            ds[i].scaled_add(share, &dprotos[c]);
        }
    }
    Ok((loss, ds))
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub prompts: PromptPair,
    /// Prompts after each requested epoch count, in the order requested.
    pub snapshots: Vec<(usize, PromptPair)>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Tunes a prompt pair from the identity start with Adam.
pub fn prompt_tune(data: &TuneData, cfg: &TuneConfig, snapshot_epochs: &[usize]) -> Result<TuneOutcome> {
    let mut prompts = PromptPair::identity(data.hidden_dim(), data.num_views());
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut snapshots: Vec<Option<PromptPair>> = vec![None; snapshot_epochs.len()];
    let mut initial_loss = f64::NAN;
    let mut final_loss = f64::NAN;
    for epoch in 0..=cfg.epochs {
        for (slot, &e) in snapshots.iter_mut().zip(snapshot_epochs) {
            if e == epoch {
                *slot = Some(prompts.clone());
            }
        }
        let (loss, grads) = downstream_loss(data, &prompts, cfg.tau)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("prompt-tuning loss {loss} at epoch {epoch}")));
        }
        if epoch == 0 {
            initial_loss = loss;
        }
        final_loss = loss;
        if epoch == cfg.epochs {
            break;
        }
        let PromptPair { feat, het } = &mut prompts;
        adam.step(
            &mut [feat.as_slice_mut().expect("contiguous"), het.as_slice_mut().expect("contiguous")],
            &[grads.feat.as_slice().expect("contiguous"), grads.het.as_slice().expect("contiguous")],
        )?;
    }
    let snapshots = snapshots
        .into_iter()
        .zip(snapshot_epochs)
        .map(|(p, &e)| p.map(|p| (e, p)).ok_or_else(|| Error::arg(format!("snapshot epoch {e} beyond {}", cfg.epochs))))
        .collect::<Result<Vec<_>>>()?;
    Ok(TuneOutcome { prompts, snapshots, initial_loss, final_loss })
}
