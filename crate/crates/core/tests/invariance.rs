mod common;

use common::*;
use rand::Rng;
use svmf_core::fingerprint::{fingerprint_detections, Hyperparams};
use svmf_core::graph::build_graph;

#[test]
fn translation_scale_and_order_leave_bytes_unchanged() {
    let catalog = toy_catalog();
    let hp = Hyperparams::default();
    let mut rng = rng(1234);
    for _ in 0..200 {
        let set = random_detection_set(&mut rng, 20, catalog.n());
        let base = fingerprint_detections(&set, &catalog, &hp, 0.0).unwrap().encode();
        let (dx, dy) = (rng.gen_range(-1e3..1e3), rng.gen_range(-1e3..1e3));
        let s = rng.gen_range(0.1..10.0);
        let variants = [
            set.map_boxes(|b| b.translate(dx, dy)),
            set.map_boxes(|b| b.scale(s)),
            shuffled(&set, &mut rng),
            shuffled(&set, &mut rng).map_boxes(|b| b.scale(s).translate(dx, dy)),
        ];
        for v in &variants {
            assert_eq!(fingerprint_detections(v, &catalog, &hp, 0.0).unwrap().encode(), base);
        }
    }
}

#[test]
fn reordering_keeps_adjacency_per_instance() {
    let mut rng = rng(77);
    for _ in 0..100 {
        let set = random_detection_set(&mut rng, 15, 12);
        let g = build_graph(&set, 0.1).unwrap();
        let h = build_graph(&shuffled(&set, &mut rng), 0.1).unwrap();
        assert_eq!(g.edge_set(), h.edge_set());
        assert_eq!(g.to_dump(), h.to_dump());
    }
}

#[test]
fn larger_expansion_only_adds_edges() {
    let mut rng = rng(4);
    for _ in 0..200 {
        let set = random_detection_set(&mut rng, 20, 12);
        let factors = [-1.0, 0.0, 0.05, 0.1, 0.25, 1.0];
        let edges: Vec<_> = factors.iter().map(|&f| build_graph(&set, f).unwrap().edge_set()).collect();
        for w in edges.windows(2) {
            assert!(w[0].is_subset(&w[1]));
        }
    }
}

#[test]
fn larger_expansion_never_lowers_a_cell() {
    // With a non-increasing h2 table, added edges can only shorten distances,
    // so each coefficient is monotone in the expansion factor.
    let catalog = toy_catalog();
    let mut rng = rng(6);
    for _ in 0..200 {
        let set = random_detection_set(&mut rng, 20, catalog.n());
        let small = Hyperparams {
            expansion_factor: 0.05,
            ..Hyperparams::default()
        };
        let large = Hyperparams::default();
        let a = fingerprint_detections(&set, &catalog, &small, 0.0).unwrap();
        let b = fingerprint_detections(&set, &catalog, &large, 0.0).unwrap();
        for ((i, j), v) in a.cells() {
            assert!(b.get(i, j).unwrap() >= v);
        }
        let same_edges = build_graph(&set, 0.05).unwrap().edge_set() == build_graph(&set, 0.1).unwrap().edge_set();
        if same_edges {
            assert_eq!(a, b);
        }
    }
}

#[test]
fn score_threshold_drops_low_confidence_instances() {
    let catalog = toy_catalog();
    let hp = Hyperparams::default();
    let mut rng = rng(10);
    let set = random_detection_set(&mut rng, 20, catalog.n());
    let all = fingerprint_detections(&set, &catalog, &hp, 0.0).unwrap();
    let none = fingerprint_detections(&set, &catalog, &hp, 1.1).unwrap();
    assert!(none.is_empty());
    let total: f64 = all.cells().filter(|((i, j), _)| i == j).map(|(_, v)| v).sum();
    assert!(total >= hp.h1 * set.instances.len() as f64);
}
