//! Test-only oracles and generators shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svmf_core::catalog::{Catalog, ClassId, SubstructureKind};
use svmf_core::detection::{BoundingBox, DetectionInstance, DetectionSet};
use svmf_core::fingerprint::{Hyperparams, Svmf};
use svmf_core::graph::SubstructureGraph;

pub const UNREACHABLE: u32 = u32::MAX;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Twelve classes; 9, 10 and 11 are carbon backbones.
pub fn toy_catalog() -> Catalog {
    Catalog::toy(12, &[9, 10, 11]).unwrap()
}

pub fn reference_catalog() -> Catalog {
    Catalog::load(concat!(env!("CARGO_MANIFEST_DIR"), "/data/reference_catalog.tsv")).unwrap()
}

/// Hop counts between all node positions by Floyd-Warshall.
pub fn floyd_warshall(g: &SubstructureGraph) -> Vec<Vec<u32>> {
    let n = g.node_count();
    let mut dist = vec![vec![UNREACHABLE; n]; n];
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = 0;
        for &j in g.neighbors(i) {
            row[j] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if dist[i][k] != UNREACHABLE && dist[k][j] != UNREACHABLE {
                    let via = dist[i][k] + dist[k][j];
                    if via < dist[i][j] {
                        dist[i][j] = via;
                    }
                }
            }
        }
    }
    dist
}

/// Direct evaluation of the coefficient definitions: for every class pair
/// `i <= j`, sum `h2(d)` over instance pairs (unordered pairs within a class),
/// dividing once per carbon endpoint, and add `h1 * n_i` on the diagonal.
/// Returns non-zero cells keyed by `(i, j)`.
pub fn oracle_svmf(
    g: &SubstructureGraph,
    catalog: &Catalog,
    hp: &Hyperparams,
) -> BTreeMap<(ClassId, ClassId), f64> {
    let dist = floyd_warshall(g);
    let mut by_class: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for (pos, node) in g.nodes().iter().enumerate() {
        by_class.entry(node.class_id).or_default().push(pos);
    }
    let classes: Vec<ClassId> = by_class.keys().copied().collect();
    let h2 = |d: u32| -> f64 {
        if (d as usize) < hp.h2.len() {
            hp.h2[d as usize]
        } else {
            0.0
        }
    };
    let is_carbon = |c: ClassId| catalog.kind_of(c).unwrap() == SubstructureKind::CarbonBackbone;

    let mut out = BTreeMap::new();
    for (xi, &ci) in classes.iter().enumerate() {
        for &cj in &classes[xi..] {
            let mut g_ij = 0.0;
            let inst_i = &by_class[&ci];
            let inst_j = &by_class[&cj];
            for (a_idx, &alpha) in inst_i.iter().enumerate() {
                for (b_idx, &beta) in inst_j.iter().enumerate() {
                    if ci == cj && b_idx <= a_idx {
                        continue;
                    }
                    let hops = dist[alpha][beta];
                    if hops == UNREACHABLE {
                        continue;
                    }
                    let mut w = h2(hops - 1);
                    if is_carbon(ci) {
                        w /= hp.carbon_divisor;
                    }
                    if is_carbon(cj) {
                        w /= hp.carbon_divisor;
                    }
                    g_ij += w;
                }
            }
            let value = if ci == cj {
                hp.h1 * inst_i.len() as f64 + g_ij
            } else {
                g_ij
            };
            if value != 0.0 {
                out.insert((ci, cj), value);
            }
        }
    }
    out
}

pub fn cells(fp: &Svmf) -> BTreeMap<(ClassId, ClassId), f64> {
    fp.cells().collect()
}

/// Random graph with up to `max_nodes` nodes over classes `0..n_classes`.
pub fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize, n_classes: u32) -> SubstructureGraph {
    let nodes_n = rng.gen_range(0..=max_nodes);
    let density: f64 = rng.gen_range(0.0..0.7);
    let nodes: Vec<(u64, ClassId)> = (0..nodes_n)
        .map(|i| (i as u64 * 3 + 1, rng.gen_range(0..n_classes)))
        .collect();
    let mut edges = Vec::new();
    for a in 0..nodes_n {
        for b in a + 1..nodes_n {
            if rng.gen::<f64>() < density {
                edges.push((nodes[a].0, nodes[b].0));
            }
        }
    }
    SubstructureGraph::from_edges("random", nodes, &edges).unwrap()
}

/// Random detection set with boxes scattered over a 200x200 canvas.
pub fn random_detection_set(rng: &mut ChaCha8Rng, max_instances: usize, n_classes: u32) -> DetectionSet {
    let count = rng.gen_range(1..=max_instances);
    let instances = (0..count)
        .map(|i| {
            let x = rng.gen_range(0.0..200.0);
            let y = rng.gen_range(0.0..200.0);
            let w = rng.gen_range(5.0..50.0);
            let h = rng.gen_range(5.0..50.0);
            DetectionInstance {
                instance_id: 100 + i as u64,
                class_id: rng.gen_range(0..n_classes),
                score: rng.gen_range(0.0..=1.0),
                bbox: BoundingBox::new(x, y, x + w, y + h),
            }
        })
        .collect();
    DetectionSet::new("random", instances)
}

pub fn shuffled(set: &DetectionSet, rng: &mut ChaCha8Rng) -> DetectionSet {
    let mut out = set.clone();
    out.instances.shuffle(rng);
    out
}

/// Random fingerprint over an `n x n` matrix with values spanning several
/// orders of magnitude; may be empty.
pub fn random_svmf(rng: &mut ChaCha8Rng, n: u32, max_entries: usize) -> Svmf {
    let count = rng.gen_range(0..=max_entries);
    let mut entries = BTreeMap::new();
    for _ in 0..count {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let (i, j) = (a.min(b), a.max(b));
        let k = u64::from(i) * u64::from(n) + u64::from(j);
        let v = 10f64.powf(rng.gen_range(-3.0..3.0));
        entries.insert(k, v);
    }
    Svmf::from_entries(n, entries).unwrap()
}

pub fn relative_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}
