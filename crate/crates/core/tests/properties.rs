mod common;

use std::collections::HashSet;

use chrono::NaiveDate;
use common::*;
use manager_core::corpus::{hash_embed, HashEmbed, Sample};
use manager_core::evaluation::{f1_score, mse};
use manager_core::graph_builder::{build_graph, CrossModalGraph, NodeKind, Variant};
use manager_core::kg_store::{EntityId, KnowledgeGraph};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(seed: u64, n_entities: usize, n_tokens: usize) -> (KnowledgeGraph, Vec<String>, NaiveDate) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = random_names(&mut rng, n_entities);
    let kg = random_kg(&mut rng, &names, 2 * n_entities, 4000);
    let tokens = random_tokens(&mut rng, n_tokens);
    let cutoff = date_in(&mut rng, 4400);
    (kg, tokens, cutoff)
}

fn graph_fixture(seed: u64, dim: usize, variant: Variant) -> (Sample, KnowledgeGraph, CrossModalGraph) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_entities, n_triples) = (rng.gen_range(1..=10), rng.gen_range(1..=25));
    let names = random_names(&mut rng, n_entities);
    let kg = random_kg(&mut rng, &names, n_triples, 4000);
    let lens: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(1..=6)).collect();
    let date = date_in(&mut rng, 4400);
    let sample = random_sample(&mut rng, "p", &lens, dim, date);
    let g = build_graph(&sample, &kg.view(date), &HashEmbed::new(dim, 0), variant, 4).unwrap();
    (sample, kg, g)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn linking_matches_brute_force(seed in any::<u64>(), n_entities in 1usize..=20, n_tokens in 0usize..=50) {
        let (kg, tokens, cutoff) = fixture(seed, n_entities, n_tokens);
        let got: Vec<(EntityId, usize, usize)> = kg
            .view(cutoff)
            .link_entities(&tokens)
            .into_iter()
            .map(|m| (m.entity, m.token_span.start, m.token_span.end))
            .collect();
        prop_assert_eq!(got, brute_force_links(&kg, cutoff, &tokens));
    }

    #[test]
    fn retrieval_is_leak_free_and_capped(seed in any::<u64>(), cap in 0usize..6) {
        let (kg, tokens, cutoff) = fixture(seed, 12, 40);
        let view = kg.view(cutoff);
        let anchors = view.link_entities(&tokens);
        let pairs = view.retrieve_knowledge(&anchors, cap);
        let mut per_anchor = vec![0usize; anchors.len()];
        for p in &pairs {
            let t = kg.triples()[p.triple_index];
            prop_assert!(t.timestamp < cutoff);
            prop_assert_eq!(t.timestamp, p.timestamp);
            prop_assert!(t.head == p.anchor || t.tail == p.anchor);
            per_anchor[p.anchor_index] += 1;
        }
        prop_assert!(per_anchor.iter().all(|&c| c <= cap));
        // determinism
        prop_assert_eq!(pairs, view.retrieve_knowledge(&view.link_entities(&tokens), cap));
    }

    #[test]
    fn graphs_contain_no_future_knowledge(seed in any::<u64>()) {
        let (sample, kg, g) = graph_fixture(seed, 4, Variant::Full);
        for kind in &g.nodes {
            if let NodeKind::KnowRel { pair } | NodeKind::KnowEnt { pair } = kind {
                prop_assert!(kg.triples()[g.pairs[*pair].triple_index].timestamp < sample.call_date);
            }
        }
    }

    #[test]
    fn adjacency_laws(seed in any::<u64>()) {
        let (sample, _, g) = graph_fixture(seed, 4, Variant::Full);
        let n = g.n_nodes();
        prop_assert_eq!(n, sample.n_tokens() + 2 * g.pairs.len() + 2 * sample.n_utterances());
        prop_assert!(g.adjacency.max_asymmetry() <= 1e-15);
        prop_assert!(g.norm_adjacency.max_asymmetry() <= 1e-15);
        for i in 0..n {
            prop_assert_eq!(g.adjacency.get(i, i), 1.0);
        }
        for r in 0..n {
            for (_, v) in g.adjacency.row(r) {
                prop_assert_eq!(v, 1.0);
            }
        }
        let key = |a: usize, b: usize| (a.min(b), a.max(b));
        let intra: HashSet<_> = g.edges.iter().filter(|e| e.family.is_intra()).map(|e| key(e.a, e.b)).collect();
        let inter: HashSet<_> = g.edges.iter().filter(|e| !e.family.is_intra()).map(|e| key(e.a, e.b)).collect();
        prop_assert!(intra.is_disjoint(&inter));
        if n <= 30 {
            let dense = g.norm_adjacency.to_dense();
            let m = DMatrix::from_fn(n, n, |i, j| dense.get(i, j));
            let radius = m.symmetric_eigen().eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            prop_assert!(radius <= 1.0 + 1e-9, "spectral radius {}", radius);
        }
    }

    #[test]
    fn structural_variants(seed in any::<u64>()) {
        let (sample, _, g) = graph_fixture(seed, 4, Variant::WithoutGraph);
        let n = g.n_nodes();
        prop_assert_eq!(g.norm_adjacency.nnz(), n);
        prop_assert!((0..n).all(|i| g.norm_adjacency.get(i, i) == 1.0));
        let (_, _, full) = graph_fixture(seed, 4, Variant::FullGraph);
        prop_assert_eq!(full.adjacency.nnz(), n * n);
        prop_assert!(full.norm_adjacency.max_asymmetry() <= 1e-15);
        let (_, _, nk) = graph_fixture(seed, 4, Variant::WithoutKnowledge);
        prop_assert_eq!(nk.n_nodes(), sample.n_tokens() + 2 * sample.n_utterances());
        prop_assert!(nk.nodes.iter().all(|k| !k.is_knowledge()));
    }

    #[test]
    fn f1_and_mse_match_confusion_oracle(seed in any::<u64>(), n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let preds: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let mut cm = [[0u32; 2]; 2];
        for (&p, &l) in preds.iter().zip(&labels) {
            cm[p as usize][l as usize] += 1;
        }
        let (tp, fp, fneg) = (cm[1][1] as f64, cm[1][0] as f64, cm[0][1] as f64);
        let expected = if tp + fp + fneg == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fneg) };
        prop_assert_eq!(f1_score(&preds, &labels).unwrap(), expected);

        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
        let mut acc = 0.0;
        for i in 0..n {
            acc += (p[i] - t[i]) * (p[i] - t[i]);
        }
        prop_assert_eq!(mse(&p, &t).unwrap(), acc / n as f64);
    }

    #[test]
    fn kg_tsv_round_trip(seed in any::<u64>()) {
        let (kg, _, _) = fixture(seed, 8, 0);
        let again = KnowledgeGraph::parse(&kg.to_tsv()).unwrap();
        prop_assert_eq!(again.to_tsv(), kg.to_tsv());
        prop_assert_eq!(again.n_entities(), kg.n_entities());
        prop_assert_eq!(again.triples(), kg.triples());
    }
}

#[test]
fn hash_embed_is_pure() {
    let first = hash_embed("inflation", 32, 9);
    for _ in 0..10_000 {
        let again = hash_embed("inflation", 32, 9);
        assert!(first.iter().zip(&again).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    let norm: f64 = first.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() < 1e-12);
}
