use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hgprompt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgprompt")).args(args).current_dir(cwd).output().unwrap()
}

fn write_toy(dir: &Path, homogeneous: bool) {
    let (ta, tb) = if homogeneous { ("paper", "paper") } else { ("paper", "author") };
    fs::write(
        dir.join("nodes.tsv"),
        format!("# id\ttype\tfeatures\np1\t{ta}\t1,0\np2\t{ta}\t0,1\na1\t{tb}\t1,1\na2\t{tb}\t0.5,0.5\n"),
    )
    .unwrap();
    fs::write(dir.join("edges.tsv"), "p1\tp2\tcites\np1\ta1\twrites\np2\ta1\twrites\na1\ta2\tcoauthor\n").unwrap();
    fs::write(dir.join("run.cfg"), "nodes = nodes.tsv\nedges = edges.tsv\n").unwrap();
}

#[test]
fn decompose_writes_one_file_pair_per_view() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path(), false);
    let out = hgprompt(&["decompose", "--config", "run.cfg", "--out", "views"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let views = dir.path().join("views");
    let manifest = fs::read_to_string(views.join("manifest.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = manifest.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 3);
    let typed_nodes: usize = rows[1..].iter().map(|r| r[2].parse::<usize>().unwrap()).sum();
    assert_eq!(typed_nodes, 4);
    assert_eq!(rows[0][3], "4");
    for r in &rows {
        assert!(views.join(r[4]).exists() && views.join(r[5]).exists());
    }
    let papers = fs::read_to_string(views.join("view1.edges.tsv")).unwrap();
    assert_eq!(papers.trim(), "p1\tp2\tcites");
}

#[test]
fn decompose_homogeneous_gives_identical_views() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path(), true);
    assert!(hgprompt(&["decompose", "--config", "run.cfg", "--out", "v"], dir.path()).status.success());
    let read = |f: &str| fs::read_to_string(dir.path().join("v").join(f)).unwrap();
    assert_eq!(read("view0.nodes.tsv"), read("view1.nodes.tsv"));
    assert_eq!(read("view0.edges.tsv"), read("view1.edges.tsv"));
}

#[test]
fn templated_pretraining_on_homogeneous_input_warns() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path(), true);
    let out = hgprompt(
        &["pretrain", "--config", "run.cfg", "--set", "mode=templated", "--set", "epochs_pretrain=3", "--set", "hidden_dim=4"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let log = fs::read_to_string(dir.path().join("train_log.tsv")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch\tloss\tval_loss"));
    assert_eq!(log.lines().count(), 1 + 4);
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path(), false);
    let code = |args: &[&str]| hgprompt(args, dir.path()).status.code();

    assert_eq!(code(&["validate", "--config", "run.cfg"]), Some(0));
    assert_eq!(code(&["frobnicate"]), Some(1));
    assert_eq!(code(&["validate", "--config", "run.cfg", "--set", "colour=red"]), Some(1));
    assert_eq!(code(&["validate", "--config", "missing.cfg"]), Some(1));

    fs::write(dir.path().join("bad_edges.tsv"), "p1\tX9\tcites\n").unwrap();
    let out = hgprompt(&["validate", "--config", "run.cfg", "--set", "edges=bad_edges.tsv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("X9") && err.contains("bad_edges.tsv:1:"), "{err}");

    fs::write(dir.path().join("huge.tsv"), "p1\tpaper\t1e307,1e307\np2\tpaper\t-1e307,1e307\na1\tauthor\t1e307,-1e307\na2\tauthor\t1e307,1e307\n").unwrap();
    let out = hgprompt(&["pretrain", "--config", "run.cfg", "--set", "nodes=huge.tsv", "--set", "epochs_pretrain=2"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn tune_eval_rejects_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    assert!(hgprompt(&["gen-synth", "--out", "a", "--set", "synth_feature_dim=4"], dir.path()).status.success());
    assert!(hgprompt(&["gen-synth", "--out", "b", "--set", "synth_feature_dim=6"], dir.path()).status.success());
    let cfg = |d: &str| ["--set".to_string(), format!("nodes={d}/nodes.tsv"), "--set".into(), format!("edges={d}/edges.tsv"), "--set".into(), format!("labels={d}/labels.tsv")];
    let mut args: Vec<String> = vec!["pretrain".into(), "--set".into(), "epochs_pretrain=2".into(), "--set".into(), "hidden_dim=4".into()];
    args.extend(cfg("a"));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    assert!(hgprompt(&refs, dir.path()).status.success());
    let mut args: Vec<String> = vec!["tune-eval".into()];
    args.extend(cfg("b"));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = hgprompt(&refs, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("input features"));
}

#[test]
fn gen_synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["x", "y"] {
        assert!(hgprompt(&["gen-synth", "--seed", "5", "--out", out], dir.path()).status.success());
    }
    for f in ["nodes.tsv", "edges.tsv", "labels.tsv"] {
        assert_eq!(fs::read(dir.path().join("x").join(f)).unwrap(), fs::read(dir.path().join("y").join(f)).unwrap());
    }
    assert!(hgprompt(&["gen-synth", "--seed", "6", "--out", "z"], dir.path()).status.success());
    assert_ne!(fs::read(dir.path().join("x/edges.tsv")).unwrap(), fs::read(dir.path().join("z/edges.tsv")).unwrap());
}

#[test]
fn lp_and_gc_run_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    assert!(hgprompt(&["gen-synth", "--out", "d", "--set", "synth_intra_prob=0.05", "--set", "synth_inter_prob=0.03"], dir.path()).status.success());
    fs::write(
        dir.path().join("run.cfg"),
        "nodes = d/nodes.tsv\nedges = d/edges.tsv\nlabels = d/labels.tsv\nepochs_pretrain = 5\nepochs_tune = 10\nhidden_dim = 8\nnum_tasks = 5\nval_tasks = 3\n",
    )
    .unwrap();
    for task in ["lp", "gc"] {
        let set = format!("task={task}");
        let out_dir = format!("out_{task}");
        let base = ["--config", "run.cfg", "--set", set.as_str(), "--out", out_dir.as_str()];
        let pre: Vec<&str> = std::iter::once("pretrain").chain(base).collect();
        assert!(hgprompt(&pre, dir.path()).status.success());
        let eval: Vec<&str> = std::iter::once("tune-eval").chain(base).collect();
        let out = hgprompt(&eval, dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let summary = fs::read_to_string(dir.path().join(&out_dir).join("report.summary.txt")).unwrap();
        assert!(summary.contains(&format!("task = {task}")));
        assert!(summary.contains("config_hash = "));
        let metric = if task == "lp" { "auc.mean" } else { "micro_f1.mean" };
        assert!(summary.contains(metric));
    }
}
