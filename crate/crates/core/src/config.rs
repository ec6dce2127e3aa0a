//! `key = value` run configuration shared by every command.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::SynthConfig;
use crate::objectives::{PretrainConfig, PretrainMode, TuneConfig};
use crate::tasks::{BenchmarkConfig, PromptSetting, TaskKind};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tau: f64,
    pub lr_pretrain: f64,
    pub lr_tune: f64,
    pub epochs_pretrain: usize,
    pub epochs_tune: usize,
    pub delta: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub negatives_per_positive: usize,
    pub mode: PretrainMode,
    pub seed: u64,
    pub triplets: usize,
    pub val_fraction: f64,

    pub task: TaskKind,
    pub k: usize,
    pub num_tasks: usize,
    pub val_tasks: usize,
    pub prompts: PromptSetting,
    pub lp_negatives: usize,
    pub lp_holdout: f64,
    pub lp_queries: usize,

    pub synth: SynthConfig,

    pub nodes: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PretrainConfig::default();
        let t = TuneConfig::default();
        let b = BenchmarkConfig::default();
        RunConfig {
            tau: p.tau,
            lr_pretrain: p.lr,
            lr_tune: t.lr,
            epochs_pretrain: p.epochs,
            epochs_tune: t.epochs,
            delta: p.delta,
            hidden_dim: p.hidden_dim,
            num_layers: p.num_layers,
            negatives_per_positive: p.negatives_per_positive,
            mode: PretrainMode::Plain,
            seed: 0,
            triplets: p.triplets,
            val_fraction: p.val_fraction,
            task: b.kind,
            k: b.k,
            num_tasks: b.num_tasks,
            val_tasks: b.val_tasks,
            prompts: b.prompts,
            lp_negatives: b.lp_negatives,
            lp_holdout: b.lp_holdout,
            lp_queries: b.lp_queries,
            synth: SynthConfig::default(),
            nodes: None,
            edges: None,
            labels: None,
            checkpoint: None,
            report: None,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn positive_real(key: &str, value: &str) -> Result<f64> {
    let x: f64 = num(key, value)?;
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::Config(format!("{key} must be a positive finite number, got {value}")));
    }
    Ok(x)
}

fn fraction(key: &str, value: &str, open_low: bool) -> Result<f64> {
    let x: f64 = num(key, value)?;
    let ok = if open_low { x > 0.0 && x < 1.0 } else { (0.0..1.0).contains(&x) };
    if !ok {
        return Err(Error::Config(format!("{key} must lie in {}0, 1), got {value}", if open_low { "(" } else { "[" })));
    }
    Ok(x)
}

fn at_least(key: &str, value: &str, min: usize) -> Result<usize> {
    let x: usize = num(key, value)?;
    if x < min {
        return Err(Error::Config(format!("{key} must be >= {min}, got {x}")));
    }
    Ok(x)
}

fn probability(key: &str, value: &str) -> Result<f64> {
    let x: f64 = num(key, value)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Config(format!("{key} must lie in [0, 1], got {value}")));
    }
    Ok(x)
}

impl RunConfig {
    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip_prefix(e))))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies one `key = value` setting with range checks.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "tau" => self.tau = positive_real(key, value)?,
            "lr_pretrain" => self.lr_pretrain = positive_real(key, value)?,
            "lr_tune" => self.lr_tune = positive_real(key, value)?,
            "epochs_pretrain" => self.epochs_pretrain = num(key, value)?,
            "epochs_tune" => self.epochs_tune = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "hidden_dim" => self.hidden_dim = at_least(key, value, 1)?,
            "num_layers" => self.num_layers = at_least(key, value, 1)?,
            "negatives_per_positive" => self.negatives_per_positive = at_least(key, value, 1)?,
            "mode" => {
                self.mode = match value {
                    "plain" => PretrainMode::Plain,
                    "templated" => PretrainMode::Templated,
                    _ => return Err(Error::Config(format!("mode must be plain or templated, got {value:?}"))),
                }
            }
            "seed" => self.seed = num(key, value)?,
            "triplets" => self.triplets = num(key, value)?,
            "val_fraction" => self.val_fraction = fraction(key, value, false)?,
            "task" => self.task = value.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "k" => self.k = at_least(key, value, 1)?,
            "num_tasks" => self.num_tasks = at_least(key, value, 1)?,
            "val_tasks" => self.val_tasks = num(key, value)?,
            "prompts" => {
                self.prompts = match value {
                    "tuned" => PromptSetting::Tuned,
                    "identity" => PromptSetting::Identity,
                    _ => return Err(Error::Config(format!("prompts must be tuned or identity, got {value:?}"))),
                }
            }
            "lp_negatives" => self.lp_negatives = at_least(key, value, 1)?,
            "lp_holdout" => self.lp_holdout = fraction(key, value, true)?,
            "lp_queries" => self.lp_queries = at_least(key, value, 1)?,
            "synth_types" => self.synth.num_types = at_least(key, value, 1)?,
            "synth_nodes_per_type" => self.synth.nodes_per_type = at_least(key, value, 1)?,
            "synth_classes" => self.synth.num_classes = at_least(key, value, 1)?,
            "synth_intra_prob" => self.synth.intra_edge_prob = probability(key, value)?,
            "synth_inter_prob" => self.synth.inter_edge_prob = probability(key, value)?,
            "synth_feature_dim" => self.synth.feature_dim = at_least(key, value, 1)?,
            "synth_class_signal" => {
                let x: f64 = num(key, value)?;
                if !x.is_finite() {
                    return Err(Error::Config(format!("{key} must be finite")));
                }
                self.synth.class_signal = x;
            }
            "nodes" => self.nodes = Some(PathBuf::from(value)),
            "edges" => self.edges = Some(PathBuf::from(value)),
            "labels" => self.labels = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "report" => self.report = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            epochs: self.epochs_pretrain,
            lr: self.lr_pretrain,
            tau: self.tau,
            delta: self.delta,
            hidden_dim: self.hidden_dim,
            num_layers: self.num_layers,
            negatives_per_positive: self.negatives_per_positive,
            triplets: self.triplets,
            val_fraction: self.val_fraction,
            seed: self.seed,
        }
    }

    pub fn benchmark_config(&self, threads: usize) -> BenchmarkConfig {
        BenchmarkConfig {
            kind: self.task,
            k: self.k,
            num_tasks: self.num_tasks,
            val_tasks: self.val_tasks,
            delta: self.delta,
            tune: TuneConfig { epochs: self.epochs_tune, lr: self.lr_tune, tau: self.tau },
            prompts: self.prompts,
            lp_negatives: self.lp_negatives,
            lp_holdout: self.lp_holdout,
            lp_queries: self.lp_queries,
            threads,
            seed: self.seed,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig { seed: self.seed, ..self.synth.clone() }
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("tau", self.tau.to_string());
        kv("lr_pretrain", self.lr_pretrain.to_string());
        kv("lr_tune", self.lr_tune.to_string());
        kv("epochs_pretrain", self.epochs_pretrain.to_string());
        kv("epochs_tune", self.epochs_tune.to_string());
        kv("delta", self.delta.to_string());
        kv("hidden_dim", self.hidden_dim.to_string());
        kv("num_layers", self.num_layers.to_string());
        kv("negatives_per_positive", self.negatives_per_positive.to_string());
        kv("mode", if self.mode == PretrainMode::Plain { "plain" } else { "templated" }.into());
        kv("seed", self.seed.to_string());
        kv("triplets", self.triplets.to_string());
        kv("val_fraction", self.val_fraction.to_string());
        kv("task", self.task.to_string());
        kv("k", self.k.to_string());
        kv("num_tasks", self.num_tasks.to_string());
        kv("val_tasks", self.val_tasks.to_string());
        kv("prompts", if self.prompts == PromptSetting::Tuned { "tuned" } else { "identity" }.into());
        kv("lp_negatives", self.lp_negatives.to_string());
        kv("lp_holdout", self.lp_holdout.to_string());
        kv("lp_queries", self.lp_queries.to_string());
        kv("synth_types", self.synth.num_types.to_string());
        kv("synth_nodes_per_type", self.synth.nodes_per_type.to_string());
        kv("synth_classes", self.synth.num_classes.to_string());
        kv("synth_intra_prob", self.synth.intra_edge_prob.to_string());
        kv("synth_inter_prob", self.synth.inter_edge_prob.to_string());
        kv("synth_feature_dim", self.synth.feature_dim.to_string());
        kv("synth_class_signal", self.synth.class_signal.to_string());
        for (k, p) in [
            ("nodes", &self.nodes),
            ("edges", &self.edges),
            ("labels", &self.labels),
            ("checkpoint", &self.checkpoint),
            ("report", &self.report),
        ] {
            if let Some(p) = p {
                kv(k, p.display().to_string());
            }
        }
        out
    }
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(msg) => msg,
        other => other.to_string(),
    }
}
