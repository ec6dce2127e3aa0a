use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use hgprompt::embedding::{aggregate_views, class_prototypes, classify, readout};
use hgprompt::encoder::{encode_view, init_params, load_checkpoint, save_checkpoint, NormAdj};
use hgprompt::graph::{gen_synthetic, load_graph, save_graph, validate, GraphParts, HeteroGraph, SynthConfig};
use hgprompt::objectives::{pretrain_loss, tune_loss};
use hgprompt::tasks::metrics::{auc_one_vs_negatives, micro_macro_f1, ndcg_with_ties};
use hgprompt::tasks::sample_nc_tasks;
use hgprompt::template::{context_subgraph, graph_template, khop_nodes, template_of_subgraph, Subgraph};

fn arb_graph(max_nodes: usize, max_types: usize) -> impl Strategy<Value = HeteroGraph> {
    (1..=max_nodes, 1..=max_types)
        .prop_flat_map(|(n, t)| {
            (
                Just(n),
                Just(t),
                proptest::collection::vec(0..t, n),
                proptest::collection::vec((0..n, 0..n, 0..3usize), 0..3 * n),
                proptest::collection::vec(-2.0..2.0f64, n * 3),
            )
        })
        .prop_map(|(n, t, node_type, edges, feats)| {
            HeteroGraph::from_parts(GraphParts {
                num_nodes: n,
                node_type,
                num_node_types: t,
                edges,
                num_edge_types: 3,
                features: Array2::from_shape_vec((n, 3), feats).unwrap(),
            })
            .unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn typed_views_partition_nodes(g in arb_graph(40, 6)) {
        let views = graph_template(&g);
        prop_assert_eq!(views.len(), g.num_node_types() + 1);
        let mut seen = vec![0; g.num_nodes()];
        for v in &views[1..] {
            for &m in &v.members {
                seen[m] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn view_edges_are_conserved(g in arb_graph(40, 4)) {
        let views = graph_template(&g);
        let typed: Vec<BTreeSet<(usize, usize)>> = views[1..]
            .iter()
            .map(|v| v.edges.iter().map(|&(a, b)| (v.members[a], v.members[b])).collect())
            .collect();
        for (a, b) in g.undirected_pairs() {
            let hits = typed.iter().filter(|s| s.contains(&(a, b))).count();
            prop_assert_eq!(hits, usize::from(g.node_type(a) == g.node_type(b)));
        }
    }

    #[test]
    fn context_grows_with_radius(g in arb_graph(30, 3), v in 0usize..30, delta in 0usize..4) {
        let v = v % g.num_nodes();
        let small: BTreeSet<usize> = khop_nodes(&g, v, delta).unwrap().into_iter().collect();
        let large: BTreeSet<usize> = khop_nodes(&g, v, delta + 1).unwrap().into_iter().collect();
        prop_assert!(small.is_subset(&large));
        prop_assert!(small.contains(&v));
    }

    #[test]
    fn homogeneous_subgraph_template_duplicates(g in arb_graph(25, 1), v in 0usize..25) {
        let sub = context_subgraph(&g, v % g.num_nodes(), 2).unwrap();
        let views = template_of_subgraph(&sub, &g);
        prop_assert_eq!(views.len(), 2);
        prop_assert_eq!(&views[0].members, &views[1].members);
        prop_assert_eq!(&views[0].edges, &views[1].edges);
    }

    #[test]
    fn normalization_is_idempotent(g in arb_graph(30, 3)) {
        let mut parts = g.parts().clone();
        parts.normalize();
        prop_assert_eq!(&parts, g.parts());
    }

    #[test]
    fn save_load_round_trip(g in arb_graph(30, 3)) {
        let dir = tempfile::tempdir().unwrap();
        let (np, ep) = (dir.path().join("n.tsv"), dir.path().join("e.tsv"));
        save_graph(&g, &np, &ep).unwrap();
        let back = load_graph(&np, &ep, None).unwrap().graph;
        prop_assert_eq!(back.num_nodes(), g.num_nodes());
        prop_assert_eq!(back.features(), g.features());
        let name = |h: &HeteroGraph, v: usize| h.names().node_ids[v].clone();
        let ty = |h: &HeteroGraph, v: usize| h.names().node_types[h.node_type(v)].clone();
        for v in 0..g.num_nodes() {
            prop_assert_eq!(name(&back, v), name(&g, v));
            prop_assert_eq!(ty(&back, v), ty(&g, v));
        }
        let edges = |h: &HeteroGraph| -> Vec<(String, String, String)> {
            let mut e: Vec<_> = h.edges().iter().map(|&(a, b, t)| (name(h, a), name(h, b), h.names().edge_types[t].clone())).collect();
            e.sort();
            e
        };
        prop_assert_eq!(edges(&back), edges(&g));
    }

    #[test]
    fn norm_adj_is_symmetric_and_contractive(g in arb_graph(15, 3)) {
        for view in graph_template(&g) {
            let a = NormAdj::new(&view).to_dense();
            prop_assert_eq!(a.dim(), (view.len(), view.len()));
            prop_assert!((&a - &a.t()).iter().all(|x| x.abs() < 1e-15));
            for (i, j) in (0..view.len()).flat_map(|i| (0..view.len()).map(move |j| (i, j))) {
                let linked = i == j || view.edges.contains(&(i.min(j), i.max(j)));
                prop_assert_eq!(a[[i, j]] != 0.0, linked);
            }
            if view.is_empty() {
                continue;
            }
            let mut x = Array1::from_elem(view.len(), 1.0) + Array1::from_shape_fn(view.len(), |i| i as f64 * 0.01);
            let mut rho = 0.0;
            for _ in 0..200 {
                let y = a.dot(&x);
                let norm = y.dot(&y).sqrt();
                if norm == 0.0 {
                    break;
                }
                rho = norm / x.dot(&x).sqrt();
                x = y / norm;
            }
            prop_assert!(rho <= 1.0 + 1e-9, "spectral radius {}", rho);
        }
    }

    #[test]
    fn encoder_is_permutation_equivariant(g in arb_graph(15, 2), seed in any::<u64>(), rot in 0usize..15) {
        let n = g.num_nodes();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let parts = g.parts();
        let mut features = Array2::zeros(parts.features.dim());
        let mut node_type = vec![0; n];
        for v in 0..n {
            features.row_mut(perm[v]).assign(&parts.features.row(v));
            node_type[perm[v]] = parts.node_type[v];
        }
        let edges = parts.edges.iter().map(|&(a, b, t)| (perm[a], perm[b], t)).collect();
        let h = HeteroGraph::from_parts(GraphParts { node_type, edges, features, ..parts.clone() }).unwrap();
        let params = init_params(3, 5, 2, seed).unwrap();
        let e1 = encode_view(&graph_template(&g)[0], g.features().view(), &params).unwrap();
        let e2 = encode_view(&graph_template(&h)[0], h.features().view(), &params).unwrap();
        for v in 0..n {
            let d = &e1.embeddings().row(v) - &e2.embeddings().row(perm[v]);
            prop_assert!(d.iter().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact(seed in any::<u64>(), d in 1usize..6, hidden in 1usize..9, layers in 1usize..4) {
        let params = init_params(d, hidden, layers, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save_checkpoint(&params, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        prop_assert_eq!(back.checksum(), params.checksum());
        prop_assert_eq!(back, params);
    }

    #[test]
    fn readout_ignores_row_order(rows in proptest::collection::vec(proptest::collection::vec(-3.0..3.0f64, 4), 1..8), rot in 0usize..8) {
        let n = rows.len();
        let m = Array2::from_shape_fn((n, 4), |(i, j)| rows[i][j]);
        let r = Array2::from_shape_fn((n, 4), |(i, j)| rows[(i + rot) % n][j]);
        let p = Array1::from_vec(vec![0.5, 1.0, -2.0, 3.0]);
        let a = readout(m.view(), Some(p.view())).unwrap();
        let b = readout(r.view(), Some(p.view())).unwrap();
        prop_assert!((&a - &b).iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn aggregation_is_linear(vals in proptest::collection::vec(-3.0..3.0f64, 9), het in proptest::collection::vec(-1.0..1.0f64, 3)) {
        let rs: Vec<Array1<f64>> = (0..3).map(|i| Array1::from_vec(vals[3 * i..3 * i + 3].to_vec())).collect();
        let p = Array1::from_vec(het.clone());
        let got = aggregate_views(&rs, Some(p.view())).unwrap();
        for j in 0..3 {
            let want: f64 = (0..3).map(|i| (1.0 + het[i]) * vals[3 * i + j]).sum();
            prop_assert!((got[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn classify_ignores_positive_scaling(
        protos in proptest::collection::vec(proptest::collection::vec(-2.0..2.0f64, 3), 2..5),
        q in proptest::collection::vec(-2.0..2.0f64, 3),
        scale in 1e-3..1e3f64,
    ) {
        let protos: Vec<Array1<f64>> = protos.into_iter().map(Array1::from_vec).collect();
        let protos = class_prototypes(&protos.into_iter().map(|p| vec![p]).collect::<Vec<_>>()).unwrap();
        let q = Array1::from_vec(q);
        prop_assert_eq!(classify(q.view(), &protos), classify((&q * scale).view(), &protos));
    }

    #[test]
    fn losses_are_nonnegative_and_monotone(sa in -1.0..1.0f64, sb in -1.0..1.0f64, tau in 0.05..2.0f64, eps in 1e-3..0.1f64) {
        let l = pretrain_loss(&[(sa, sb)], tau).unwrap();
        prop_assert!(l.is_finite() && l >= 0.0);
        prop_assert!(pretrain_loss(&[(sa + eps, sb)], tau).unwrap() < l);
        prop_assert!(pretrain_loss(&[(sa, sb + eps)], tau).unwrap() > l);
        let t = tune_loss(&[vec![sa, sb, 0.0]], &[1], tau).unwrap();
        prop_assert!(t.is_finite() && t >= 0.0);
    }

    #[test]
    fn metrics_stay_in_unit_interval(
        preds in proptest::collection::vec(0usize..4, 1..30),
        scores in proptest::collection::vec(-1.0..1.0f64, 2..12),
    ) {
        let truths: Vec<usize> = preds.iter().map(|p| (p * 7 + 1) % 4).collect();
        let (micro, macro_) = micro_macro_f1(&preds, &truths, 4).unwrap();
        prop_assert!((0.0..=1.0).contains(&micro) && (0.0..=1.0).contains(&macro_));
        let auc = auc_one_vs_negatives(scores[0], &scores[1..]);
        let ndcg = ndcg_with_ties(scores[0], &scores[1..]);
        prop_assert!((0.0..=1.0).contains(&auc) && ndcg > 0.0 && ndcg <= 1.0);
    }

    #[test]
    fn sampled_tasks_are_disjoint(seed in any::<u64>(), k in 1usize..4) {
        let (_, labels) = gen_synthetic(&SynthConfig { nodes_per_type: 30, seed, ..SynthConfig::default() }).unwrap();
        for t in sample_nc_tasks(&labels, k, 5, seed).unwrap() {
            prop_assert!(t.is_disjoint());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn generator_output_validates(seed in any::<u64>()) {
        let (g, labels) = gen_synthetic(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
        prop_assert!(validate(g.parts()).is_ok());
        prop_assert!(labels.check_within(g.num_nodes()).is_ok());
    }
}

#[test]
fn random_scorer_auc_is_half() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let n = 20_000;
    let mean = (0..n)
        .map(|_| {
            let negs: Vec<f64> = (0..10).map(|_| rng.gen()).collect();
            auc_one_vs_negatives(rng.gen(), &negs)
        })
        .sum::<f64>()
        / n as f64;
    assert!((mean - 0.5).abs() < 0.01, "{mean}");
}

#[test]
fn whole_graph_subgraph_reproduces_template() {
    let (g, _) = gen_synthetic(&SynthConfig::default()).unwrap();
    let direct = graph_template(&g);
    let via = template_of_subgraph(&Subgraph::whole(&g), &g);
    assert_eq!(direct, via);
}
