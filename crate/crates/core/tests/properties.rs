//! Property-based invariants of the numeric kernels, quantization,
//! splits and metrics.

use graphvq_core::autodiff::{softmax_rows_value, Tape};
use graphvq_core::distill::{soft_code_assignment, CompFn};
use graphvq_core::eval::{cut_value, cut_value_dense_oracle, production_metrics};
use graphvq_core::graph::{normalize_adjacency, Adjacency, Graph, NormMode};
use graphvq_core::split::{make_inductive_split, make_transductive_split, LabeledSpec};
use graphvq_core::tensor::Tensor;
use graphvq_core::tokenizer::assign_codes;

use proptest::prelude::*;

fn small_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor<f64>> {
    proptest::collection::vec(-10.0f64..10.0, rows * cols)
        .prop_map(move |data| Tensor::from_vec(rows, cols, data))
}

fn edge_list(n: usize, max_edges: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    proptest::collection::vec((0..n, 0..n), 0..max_edges)
}

/// Independent re-implementation of nearest-code assignment used as the
/// oracle: squared distances in plain f64 with explicit tie handling.
fn brute_force_codes(h: &Tensor<f64>, codebook: &Tensor<f64>) -> Vec<usize> {
    (0..h.rows())
        .map(|i| {
            let mut pairs: Vec<(f64, usize)> = (0..codebook.rows())
                .map(|j| {
                    let d: f64 = h
                        .row(i)
                        .iter()
                        .zip(codebook.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (d, j)
                })
                .collect();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            pairs[0].1
        })
        .collect()
}

fn labeled_graph(n: usize, edges: &[(usize, usize)], classes: usize) -> Graph {
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut feats = Tensor::<f32>::zeros(n, 3);
    for (i, v) in feats.data_mut().iter_mut().enumerate() {
        *v = (i % 7) as f32 - 3.0;
    }
    Graph::new(n, edges, feats, labels, classes).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_stochastic(x in small_matrix(4, 6)) {
        let s = softmax_rows_value(&x);
        for i in 0..4 {
            let sum: f64 = s.row(i).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(s.row(i).iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn tape_softmax_matches_value_softmax(x in small_matrix(3, 5)) {
        let mut tape: Tape<f64> = Tape::new();
        let v = tape.constant(x.clone());
        let s = tape.softmax_rows(v);
        let expected = softmax_rows_value(&x);
        for (a, b) in tape.value(s).data().iter().zip(expected.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_code_matches_bruteforce(h in small_matrix(6, 3), cb in small_matrix(5, 3)) {
        prop_assert_eq!(assign_codes(&h, &cb), brute_force_codes(&h, &cb));
    }

    #[test]
    fn soft_assignments_are_stochastic(h in small_matrix(4, 3), cb in small_matrix(5, 3), tau in 0.1f64..20.0) {
        for comp in [CompFn::NegL2, CompFn::Cosine] {
            let p = soft_code_assignment(&h, &cb, comp, tau).unwrap();
            for i in 0..4 {
                let sum: f64 = p.row(i).iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn high_temperature_flattens_assignments(h in small_matrix(3, 3), cb in small_matrix(4, 3)) {
        let p = soft_code_assignment(&h, &cb, CompFn::NegL2, 1e9).unwrap();
        for v in p.data() {
            prop_assert!((v - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn kl_nonnegative_and_zero_on_itself(a in small_matrix(3, 4), b in small_matrix(3, 4)) {
        let p = softmax_rows_value(&a);
        let q = softmax_rows_value(&b);
        let mut tape: Tape<f64> = Tape::new();
        let pv = tape.constant(p.clone());
        let qv = tape.constant(q);
        let kl = tape.kl_rows(pv, qv).unwrap();
        prop_assert!(tape.value(kl).item() >= -1e-12);
        let mut tape2: Tape<f64> = Tape::new();
        let p1 = tape2.constant(p.clone());
        let p2 = tape2.constant(p);
        let kl_self = tape2.kl_rows(p1, p2).unwrap();
        prop_assert!(tape2.value(kl_self).item().abs() < 1e-12);
    }

    #[test]
    fn adjacency_is_symmetric_deduped_loopless(edges in edge_list(12, 40)) {
        let adj = Adjacency::from_edges(12, &edges).unwrap();
        for u in 0..12 {
            let nbrs = adj.neighbors(u);
            // sorted and unique
            prop_assert!(nbrs.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(!nbrs.contains(&u));
            for &v in nbrs {
                prop_assert!(adj.has_edge(v, u));
            }
        }
    }

    #[test]
    fn gcn_normalization_rows_are_bounded(edges in edge_list(10, 30)) {
        let adj = Adjacency::from_edges(10, &edges).unwrap();
        let norm = normalize_adjacency::<f64>(&adj, NormMode::Mean);
        // mean aggregation over A + I is row-stochastic
        let dense = norm.to_dense();
        for i in 0..10 {
            let sum: f64 = dense.row(i).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cut_value_matches_dense_oracle(edges in edge_list(15, 40), seed_parts in proptest::collection::vec(0usize..4, 15)) {
        let adj = Adjacency::from_edges(15, &edges).unwrap();
        if adj.num_edges() == 0 {
            prop_assert!(cut_value(&adj, &seed_parts).is_err());
        } else {
            let fast = cut_value(&adj, &seed_parts).unwrap();
            let slow = cut_value_dense_oracle(&adj, &seed_parts).unwrap();
            prop_assert!((fast - slow).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&fast));
        }
    }

    #[test]
    fn transductive_split_partitions_nodes(edges in edge_list(14, 30), seed in 0u64..1000) {
        let g = labeled_graph(14, &edges, 2);
        let s = make_transductive_split(&g, seed, LabeledSpec::PerClass(3)).unwrap();
        s.validate(&g).unwrap();
        prop_assert_eq!(s.labeled.len(), 6);
        prop_assert!(s.inductive.is_empty());
        prop_assert_eq!(s.labeled.len() + s.observed_unlabeled.len(), 14);
    }

    #[test]
    fn inductive_split_removes_exactly_incident_edges(edges in edge_list(20, 60), seed in 0u64..1000) {
        let g = labeled_graph(20, &edges, 2);
        let s = make_inductive_split(&g, seed, LabeledSpec::PerClass(4), 0.25).unwrap();
        s.validate(&g).unwrap();
        let mut ind = vec![false; 20];
        for &v in &s.inductive {
            ind[v] = true;
        }
        // every removed edge touches an inductive node, every kept one does not
        let kept: std::collections::HashSet<(usize, usize)> = s.train_edges.iter().copied().collect();
        for (u, v) in g.adjacency.edge_list() {
            let touches = ind[u] || ind[v];
            prop_assert_eq!(!kept.contains(&(u, v)), touches);
        }
    }

    #[test]
    fn production_metric_is_convex_combination(t in 0.0f64..1.0, i in 0.0f64..1.0, w in 0.0f64..1.0) {
        let m = production_metrics(t, i, w);
        let lo = t.min(i);
        let hi = t.max(i);
        prop_assert!(m.production >= lo - 1e-12 && m.production <= hi + 1e-12);
    }
}
