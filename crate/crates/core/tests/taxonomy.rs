mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{reader, synthetic_corpus, taxonomy_oracle};
use riskmine::corpus::ingest;
use riskmine::taxonomy::{default_patterns, mine_taxonomy, EdgeOrigin, TaxonomyGraph};

fn node_ids(g: &TaxonomyGraph) -> BTreeSet<String> {
    g.nodes().map(|n| n.risk_type_id.clone()).collect()
}

fn edge_set(g: &TaxonomyGraph) -> BTreeSet<(String, String)> {
    g.edges().map(|e| (e.child.clone(), e.parent.clone())).collect()
}

fn mined(seed: u64, n: usize, min_support: usize) -> (TaxonomyGraph, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (corpus, sentences) = synthetic_corpus(&mut rng, n);
    (
        mine_taxonomy(&corpus, &default_patterns(), min_support).unwrap(),
        sentences,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn miner_agrees_with_regex_oracle(seed in any::<u64>(), n in 1usize..80, min_support in 1usize..4) {
        let (g, sentences) = mined(seed, n, min_support);
        let mut oracle = taxonomy_oracle(&sentences, min_support);
        oracle.nodes.insert("risk".into());
        prop_assert_eq!(node_ids(&g), oracle.nodes);
        prop_assert_eq!(edge_set(&g), oracle.edges);
    }

    #[test]
    fn attaching_orphans_roots_every_node(seed in any::<u64>(), n in 1usize..80, min_support in 1usize..4) {
        let (g, _) = mined(seed, n, min_support);
        let before = edge_set(&g);
        let g = g.attach_orphans();
        prop_assert!(g.orphans().is_empty());
        prop_assert_eq!(g.rooted(), node_ids(&g));
        for e in g.edges() {
            let key = (e.child.clone(), e.parent.clone());
            if e.origin == EdgeOrigin::DefaultAttachment {
                prop_assert_eq!(e.parent.as_str(), "risk");
                prop_assert!(!before.contains(&key));
            } else {
                prop_assert!(before.contains(&key));
            }
        }
        for n in g.nodes() {
            let found = g.lookup(&n.risk_type_id).unwrap();
            prop_assert!(!found.paths.is_empty());
            for path in &found.paths {
                prop_assert_eq!(path.last().map(String::as_str).unwrap_or("risk"), "risk");
            }
        }
    }

    #[test]
    fn raising_min_support_only_removes(seed in any::<u64>(), n in 1usize..80, k in 1usize..4) {
        let (lo, _) = mined(seed, n, k);
        let (hi, _) = mined(seed, n, k + 1);
        prop_assert!(node_ids(&hi).is_subset(&node_ids(&lo)));
        prop_assert!(edge_set(&hi).is_subset(&edge_set(&lo)));
        for node in hi.nodes().filter(|n| !n.is_root()) {
            prop_assert!(node.support() > k);
        }
        prop_assert!(hi.node("risk").is_some());
    }

    #[test]
    fn edge_export_round_trips(seed in any::<u64>(), n in 1usize..60) {
        let (g, _) = mined(seed, n, 1);
        let g = g.attach_orphans();
        let mut buf = Vec::new();
        g.write_edges_tsv(&mut buf).unwrap();
        let back = TaxonomyGraph::read_edges_tsv(buf.as_slice()).unwrap();
        let connected: BTreeSet<String> = g
            .edges()
            .flat_map(|e| [e.child.clone(), e.parent.clone()])
            .chain(["risk".to_string()])
            .collect();
        prop_assert_eq!(node_ids(&back), connected);
        prop_assert_eq!(edge_set(&back), edge_set(&g));
        for e in g.edges() {
            let b = back.edge(&e.child, &e.parent).unwrap();
            prop_assert_eq!(b.hit_count(), e.hit_count());
            prop_assert_eq!(b.origin, e.origin);
        }
    }
}

#[test]
fn mining_is_order_independent_and_deterministic() {
    let text = std::fs::read_to_string(common::fixture("acme/taxonomy_corpus.jsonl")).unwrap();
    let reversed: String = text.lines().rev().map(|l| format!("{l}\n")).collect();
    let a = mine_taxonomy(&ingest(text.as_bytes()).unwrap(), &default_patterns(), 1).unwrap();
    let b = mine_taxonomy(&ingest(reversed.as_bytes()).unwrap(), &default_patterns(), 1).unwrap();
    let (mut ea, mut eb) = (Vec::new(), Vec::new());
    a.write_edges_tsv(&mut ea).unwrap();
    b.write_edges_tsv(&mut eb).unwrap();
    assert_eq!(ea, eb);
    assert_eq!(a.to_dot(), b.to_dot());
}

#[test]
fn fixture_taxonomy_ancestors_reach_the_root() {
    let g = TaxonomyGraph::read_edges_tsv(reader("acme/taxonomy.tsv")).unwrap();
    assert!(g.orphans().is_empty());
    let anc = g.ancestors("office fire risk");
    assert_eq!(anc.last().unwrap().0, "risk");
    assert!(anc.iter().any(|(a, d)| a == "operational risk" && *d == 1), "{anc:?}");
    assert!(g.ancestors("risk").is_empty());
}
