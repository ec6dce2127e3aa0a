//! Command-line front end.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::encoder::{load_checkpoint, save_checkpoint};
use crate::error::{Error, Result};
use crate::graph::{gen_synthetic, load_graph, save_graph, save_labels, LoadedGraph};
use crate::objectives::{pretrain, PretrainGraph};
use crate::tasks::{run_benchmark, TaskKind};
use crate::template::graph_template;

#[derive(Debug, Parser)]
#[command(name = "hgprompt", version, about = "Graph pre-training and dual-prompt few-shot evaluation on heterogeneous graphs")]
pub struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for episode evaluation; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Config override, `key=value`; repeatable, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check graph (and label) files and print a summary.
    Validate,
    /// Write each template view as node and edge files plus a manifest.
    Decompose,
    /// Pre-train the encoder and write a checkpoint and training log.
    Pretrain,
    /// Tune prompts on few-shot episodes and write a metric report.
    TuneEval,
    /// Write a synthetic heterogeneous graph with labels.
    GenSynth,
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => 1,
        Error::NonFinite(_) => 3,
        _ => 2,
    }
}

/// Parses arguments, runs the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    match cli.command {
        Command::Validate => cmd_validate(&cfg),
        Command::Decompose => cmd_decompose(&cfg, &cli.out),
        Command::Pretrain => cmd_pretrain(&cfg, &cli.out),
        Command::TuneEval => cmd_tune_eval(&cfg, &cli.out, cli.threads),
        Command::GenSynth => cmd_gen_synth(&cfg, &cli.out),
    }
}

fn load(cfg: &RunConfig) -> Result<LoadedGraph> {
    let nodes = cfg.nodes.as_deref().ok_or_else(|| Error::Config("`nodes` path not set".into()))?;
    let edges = cfg.edges.as_deref().ok_or_else(|| Error::Config("`edges` path not set".into()))?;
    load_graph(nodes, edges, cfg.labels.as_deref())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn checkpoint_path(cfg: &RunConfig, out: &Path) -> PathBuf {
    cfg.checkpoint.clone().unwrap_or_else(|| out.join("checkpoint.bin"))
}

pub fn cmd_validate(cfg: &RunConfig) -> Result<()> {
    let loaded = load(cfg)?;
    let g = &loaded.graph;
    println!(
        "ok: {} nodes, {} undirected edges, {} node types, {} edge types, {} features",
        g.num_nodes(),
        g.undirected_pairs().len(),
        g.num_node_types(),
        g.num_edge_types(),
        g.feature_dim()
    );
    if let Some(l) = &loaded.labels {
        println!("labels: {} nodes in {} classes", l.len(), l.num_classes);
    }
    Ok(())
}

pub fn cmd_decompose(cfg: &RunConfig, out: &Path) -> Result<()> {
    let loaded = load(cfg)?;
    let g = &loaded.graph;
    let names = g.names();
    let edge_type: HashMap<(usize, usize), usize> = g.edges().iter().map(|&(a, b, t)| ((a, b), t)).collect();
    create_dir(out)?;
    let mut manifest = String::from("view\tnode_type\tnodes\tedges\tnode_file\tedge_file\n");
    for view in graph_template(g) {
        let i = view.view_index;
        let node_file = format!("view{i}.nodes.tsv");
        let edge_file = format!("view{i}.edges.tsv");
        let mut body = String::new();
        for &v in &view.members {
            let feats: Vec<String> = g.features().row(v).iter().map(|x| x.to_string()).collect();
            let _ = writeln!(body, "{}\t{}\t{}", names.node_ids[v], names.node_types[g.node_type(v)], feats.join(","));
        }
        write(&out.join(&node_file), &body)?;
        let mut body = String::new();
        for &(a, b) in &view.edges {
            let (ga, gb) = (view.members[a], view.members[b]);
            let _ = writeln!(body, "{}\t{}\t{}", names.node_ids[ga], names.node_ids[gb], names.edge_types[edge_type[&(ga, gb)]]);
        }
        write(&out.join(&edge_file), &body)?;
        let ty = if i == 0 { "*" } else { names.node_types[i - 1].as_str() };
        let _ = writeln!(manifest, "{i}\t{ty}\t{}\t{}\t{node_file}\t{edge_file}", view.len(), view.edges.len());
    }
    write(&out.join("manifest.tsv"), &manifest)?;
    println!("wrote {} views to {}", g.num_node_types() + 1, out.display());
    Ok(())
}

pub fn cmd_pretrain(cfg: &RunConfig, out: &Path) -> Result<()> {
    let loaded = load(cfg)?;
    let holdout = if cfg.task == TaskKind::Lp {
        cfg.benchmark_config(0).link_split(&loaded.graph)?.holdout
    } else {
        Vec::new()
    };
    let input = PretrainGraph { graph: &loaded.graph, holdout: &holdout };
    let outcome = pretrain(&[input], cfg.mode, &cfg.pretrain_config())?;

    create_dir(out)?;
    let ckpt = checkpoint_path(cfg, out);
    save_checkpoint(&outcome.params, &ckpt)?;
    let mut log = String::from("epoch\tloss\tval_loss\n");
    for row in &outcome.curve {
        let _ = writeln!(log, "{}\t{}\t{}", row.epoch, row.loss, row.val_loss);
    }
    write(&out.join("train_log.tsv"), &log)?;
    println!(
        "pretrained {} epochs: loss {:.6} -> {:.6}, best epoch {}, checkpoint {} ({})",
        cfg.epochs_pretrain,
        outcome.initial_loss(),
        outcome.final_loss(),
        outcome.best_epoch,
        ckpt.display(),
        outcome.params.checksum()
    );
    Ok(())
}

pub fn cmd_tune_eval(cfg: &RunConfig, out: &Path, threads: usize) -> Result<()> {
    let loaded = load(cfg)?;
    let params = load_checkpoint(&checkpoint_path(cfg, out))?;
    let report = run_benchmark(&loaded.graph, loaded.labels.as_ref(), &params, &cfg.benchmark_config(threads))?;
    let (tsv, summary) = match &cfg.report {
        Some(p) => (p.clone(), p.with_extension("summary.txt")),
        None => (out.join("report.tsv"), out.join("report.summary.txt")),
    };
    if let Some(dir) = tsv.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write(&tsv, &report.to_tsv())?;
    write(&summary, &report.summary())?;
    for m in &report.metrics {
        println!("{}\t{:.2} ± {:.2}", m.name, 100.0 * m.mean, 100.0 * m.std);
    }
    Ok(())
}

pub fn cmd_gen_synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (graph, labels) = gen_synthetic(&cfg.synth_config())?;
    create_dir(out)?;
    save_graph(&graph, &out.join("nodes.tsv"), &out.join("edges.tsv"))?;
    save_labels(&graph, &labels, &out.join("labels.tsv"))?;
    println!(
        "wrote {} nodes, {} edges, {} labels to {}",
        graph.num_nodes(),
        graph.undirected_pairs().len(),
        labels.len(),
        out.display()
    );
    Ok(())
}
