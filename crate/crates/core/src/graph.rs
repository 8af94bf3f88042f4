//! Substructure graph built from expanded-box overlaps, plus the capped
//! instance distances that weight fingerprint intersection terms.
//!
//! The distance between two instances is the number of *intermediate*
//! instances on a shortest path: directly linked instances are at distance 0,
//! a chain `A - B - C` puts `A` and `C` at distance 1.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::catalog::ClassId;
use crate::detection::{expansion_margin, DetectionSet, InstanceId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphNode {
    pub instance_id: InstanceId,
    pub class_id: ClassId,
}

/// Undirected, loop-free graph over detected instances.
#[derive(Debug, Clone)]
pub struct SubstructureGraph {
    image_key: String,
    nodes: Vec<GraphNode>,
    adjacency: Vec<Vec<usize>>,
    index: HashMap<InstanceId, usize>,
}

impl SubstructureGraph {
    /// Builds a graph from explicit nodes and instance-id edges. Duplicate
    /// edges collapse; self-loops and unknown endpoints are rejected.
    pub fn from_edges(
        image_key: impl Into<String>,
        nodes: Vec<(InstanceId, ClassId)>,
        edges: &[(InstanceId, InstanceId)],
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (pos, (id, _)) in nodes.iter().enumerate() {
            if index.insert(*id, pos).is_some() {
                return Err(Error::Validation(format!("duplicate instance_id {id}")));
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(a, b) in edges {
            if a == b {
                return Err(Error::Validation(format!("self-loop on instance {a}")));
            }
            let ia = *index
                .get(&a)
                .ok_or_else(|| Error::Lookup(format!("edge endpoint {a} is not a node")))?;
            let ib = *index
                .get(&b)
                .ok_or_else(|| Error::Lookup(format!("edge endpoint {b} is not a node")))?;
            adjacency[ia].push(ib);
            adjacency[ib].push(ia);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(SubstructureGraph {
            image_key: image_key.into(),
            nodes: nodes
                .into_iter()
                .map(|(instance_id, class_id)| GraphNode {
                    instance_id,
                    class_id,
                })
                .collect(),
            adjacency,
            index,
        })
    }

    pub fn image_key(&self) -> &str {
        &self.image_key
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Neighbor positions of the node at `pos`, ascending.
    pub fn neighbors(&self, pos: usize) -> &[usize] {
        &self.adjacency[pos]
    }

    pub fn position(&self, instance_id: InstanceId) -> Result<usize> {
        self.index
            .get(&instance_id)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("instance {instance_id} not in graph")))
    }

    /// Edges as `(smaller id, larger id)` pairs.
    pub fn edge_set(&self) -> BTreeSet<(InstanceId, InstanceId)> {
        let mut edges = BTreeSet::new();
        for (a, list) in self.adjacency.iter().enumerate() {
            for &b in list {
                let (x, y) = (self.nodes[a].instance_id, self.nodes[b].instance_id);
                edges.insert((x.min(y), x.max(y)));
            }
        }
        edges
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.nodes.len()
    }

    pub fn to_dump(&self) -> GraphDump {
        let mut nodes: Vec<[u64; 2]> = self
            .nodes
            .iter()
            .map(|n| [n.instance_id, u64::from(n.class_id)])
            .collect();
        nodes.sort_unstable();
        GraphDump {
            nodes,
            edges: self.edge_set().into_iter().map(|(a, b)| [a, b]).collect(),
        }
    }

    /// BFS hop counts from `source`, stopping after `max_hops` edges.
    /// Unvisited positions hold `None`.
    fn hops_from(&self, source: usize, max_hops: Option<u32>, hops: &mut [Option<u32>]) {
        hops.iter_mut().for_each(|h| *h = None);
        hops[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let next = hops[u].unwrap() + 1;
            if max_hops.is_some_and(|limit| next > limit) {
                continue;
            }
            for &v in &self.adjacency[u] {
                if hops[v].is_none() {
                    hops[v] = Some(next);
                    queue.push_back(v);
                }
            }
        }
    }

    /// All position pairs `(i, j)`, `i < j`, whose distance is at most `cap`,
    /// with that distance. Ordered by `i` then `j`.
    pub fn capped_pair_distances(&self, cap: u32) -> Vec<(usize, usize, u32)> {
        let mut out = Vec::new();
        let mut hops = vec![None; self.nodes.len()];
        for source in 0..self.nodes.len() {
            if self.adjacency[source].is_empty() {
                continue;
            }
            self.hops_from(source, Some(cap + 1), &mut hops);
            for (target, h) in hops.iter().enumerate().skip(source + 1) {
                if let Some(h) = h {
                    out.push((source, target, h - 1));
                }
            }
        }
        out
    }
}

/// JSON debug form of a graph: sorted nodes and lexicographically sorted edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDump {
    pub nodes: Vec<[u64; 2]>,
    pub edges: Vec<[u64; 2]>,
}

/// Links every pair of instances whose boxes, expanded by `factor` times the
/// smallest box diagonal, overlap.
pub fn build_graph(set: &DetectionSet, factor: f64) -> Result<SubstructureGraph> {
    if !factor.is_finite() {
        return Err(Error::Domain(format!("expansion factor {factor} is not finite")));
    }
    let nodes: Vec<(InstanceId, ClassId)> = set
        .instances
        .iter()
        .map(|inst| (inst.instance_id, inst.class_id))
        .collect();
    if set.instances.is_empty() {
        return SubstructureGraph::from_edges(set.image_key.clone(), nodes, &[]);
    }
    let margin = expansion_margin(set, factor)?;
    let expanded: Vec<_> = set.instances.iter().map(|i| i.bbox.expand(margin)).collect();
    let mut edges = Vec::new();
    for a in 0..expanded.len() {
        for b in a + 1..expanded.len() {
            if expanded[a].overlaps(&expanded[b]) {
                edges.push((set.instances[a].instance_id, set.instances[b].instance_id));
            }
        }
    }
    SubstructureGraph::from_edges(set.image_key.clone(), nodes, &edges)
}

/// Number of intermediate instances on a shortest path between `a` and `b`,
/// or `None` when they are disconnected.
pub fn instance_distance(
    g: &SubstructureGraph,
    a: InstanceId,
    b: InstanceId,
) -> Result<Option<u32>> {
    if a == b {
        return Err(Error::Domain(format!("distance from instance {a} to itself")));
    }
    let ia = g.position(a)?;
    let ib = g.position(b)?;
    let mut hops = vec![None; g.node_count()];
    g.hops_from(ia, None, &mut hops);
    Ok(hops[ib].map(|h| h - 1))
}

/// Capped distances keyed by unordered instance pair `(smaller, larger)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceTable {
    pub cap: u32,
    pub pairs: BTreeMap<(InstanceId, InstanceId), u32>,
}

impl DistanceTable {
    pub fn get(&self, a: InstanceId, b: InstanceId) -> Option<u32> {
        self.pairs.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Every instance pair at distance `<= cap`, found by BFS truncated at
/// `cap + 1` edges from each node.
pub fn all_pairs_distances_capped(g: &SubstructureGraph, cap: u32) -> DistanceTable {
    let pairs = g
        .capped_pair_distances(cap)
        .into_iter()
        .map(|(i, j, d)| {
            let (a, b) = (g.nodes[i].instance_id, g.nodes[j].instance_id);
            ((a.min(b), a.max(b)), d)
        })
        .collect();
    DistanceTable { cap, pairs }
}
