//! Substructure-based visual molecular fingerprint (SVMF).
//!
//! A fingerprint is an upper-triangular `n x n` matrix over catalog classes.
//! Diagonal cell `(i, i)` holds `h1 * count_i + g(i, i)` and off-diagonal cell
//! `(i, j)` holds `g(i, j)`, where `g` sums a distance weight `h2(d)` over
//! instance pairs of the two classes that are at most `cap` apart in the
//! substructure graph. Pair weights are divided by the carbon divisor once per
//! carbon-backbone endpoint.
//!
//! Only non-zero cells are stored, keyed by the row-major index `i * n + j`.
//!
//! Binary layout (little-endian):
//!
//! | field   | type      |
//! |---------|-----------|
//! | magic   | `b"SVMF"` |
//! | version | `u8` (1)  |
//! | n       | `u32`     |
//! | count   | `u32`     |
//! | entries | `count x (k: u64, value: f64)`, ascending `k` |

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ClassId, SubstructureKind};
use crate::codec::ByteReader;
use crate::detection::DetectionSet;
use crate::error::{Error, Result};
use crate::graph::{build_graph, SubstructureGraph};

pub const SVMF_MAGIC: &[u8; 4] = b"SVMF";
pub const SVMF_VERSION: u8 = 1;
/// Size of the binary header: magic, version, n, count.
pub const SVMF_HEADER_LEN: usize = 4 + 1 + 4 + 4;

/// Fingerprint hyperparameters. The distance cap is `h2.len() - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Weight of each instance on its class's diagonal cell.
    pub h1: f64,
    /// Intersection weight indexed by distance.
    pub h2: Vec<f64>,
    /// Applied once per carbon-backbone endpoint of a pair.
    pub carbon_divisor: f64,
    /// Box expansion as a fraction of the smallest box diagonal.
    pub expansion_factor: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            h1: 10.0,
            h2: vec![2.0, 2.0, 2.0 / 4.0, 2.0 / 16.0, 2.0 / 256.0],
            carbon_divisor: 2.0,
            expansion_factor: 0.1,
        }
    }
}

impl Hyperparams {
    pub fn distance_cap(&self) -> u32 {
        (self.h2.len() as u32).saturating_sub(1)
    }

    /// Weight for distance `d`, zero beyond the cap.
    pub fn h2_at(&self, d: u32) -> f64 {
        self.h2.get(d as usize).copied().unwrap_or(0.0)
    }

    /// Truncates the table to `cap`; extending it is an error because the
    /// missing weights are unknown.
    pub fn with_cap(mut self, cap: u32) -> Result<Self> {
        let len = cap as usize + 1;
        if len > self.h2.len() {
            return Err(Error::Validation(format!(
                "cap {cap} exceeds the h2 table (defined up to {}); supply weights for every distance",
                self.distance_cap()
            )));
        }
        self.h2.truncate(len);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h1.is_finite() && self.h1 > 0.0) {
            return Err(Error::Validation(format!("h1 must be positive, got {}", self.h1)));
        }
        if self.h2.is_empty() {
            return Err(Error::Validation("h2 table is empty".into()));
        }
        if let Some(w) = self.h2.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Validation(format!("h2 weights must be >= 0, got {w}")));
        }
        if !(self.carbon_divisor.is_finite() && self.carbon_divisor > 0.0) {
            return Err(Error::Validation(format!(
                "carbon divisor must be positive, got {}",
                self.carbon_divisor
            )));
        }
        if !self.expansion_factor.is_finite() {
            return Err(Error::Validation("expansion factor must be finite".into()));
        }
        Ok(())
    }

    /// Intersection weight of a pair at distance `d` with `carbon_endpoints`
    /// carbon-backbone members.
    pub fn pair_weight(&self, d: u32, carbon_endpoints: u32) -> f64 {
        let mut w = self.h2_at(d);
        for _ in 0..carbon_endpoints {
            w /= self.carbon_divisor;
        }
        w
    }
}

/// Row-major index of upper-triangular cell `(i, j)` in an `n x n` matrix.
pub fn linear_index(i: u32, j: u32, n: u32) -> Result<u64> {
    if i > j || j >= n {
        return Err(Error::Domain(format!(
            "cell ({i}, {j}) is not upper-triangular in a {n}x{n} matrix"
        )));
    }
    Ok(u64::from(i) * u64::from(n) + u64::from(j))
}

/// Inverse of [`linear_index`].
pub fn cell_of(k: u64, n: u32) -> Result<(u32, u32)> {
    let n64 = u64::from(n);
    if n == 0 || k >= n64 * n64 {
        return Err(Error::Domain(format!("index {k} outside a {n}x{n} matrix")));
    }
    let (i, j) = ((k / n64) as u32, (k % n64) as u32);
    if i > j {
        return Err(Error::Domain(format!("index {k} is a lower-triangular cell")));
    }
    Ok((i, j))
}

/// Sparse fingerprint: strictly positive values at ascending upper-triangular
/// indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Svmf {
    n: u32,
    entries: Vec<(u64, f64)>,
}

impl Svmf {
    pub fn empty(n: u32) -> Self {
        Svmf {
            n,
            entries: Vec::new(),
        }
    }

    /// Builds a fingerprint from `(k, value)` pairs in any order.
    pub fn from_entries(n: u32, entries: impl IntoIterator<Item = (u64, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("fingerprint dimension must be >= 1".into()));
        }
        let mut entries: Vec<(u64, f64)> = entries.into_iter().collect();
        entries.sort_by_key(|e| e.0);
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::Validation(format!("duplicate index {}", pair[0].0)));
            }
        }
        for &(k, v) in &entries {
            cell_of(k, n)?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!(
                    "value at index {k} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Svmf { n, entries })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Stored `(k, value)` pairs, ascending in `k`.
    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Value of cell `(i, j)`; zero when not stored.
    pub fn get(&self, i: u32, j: u32) -> Result<f64> {
        let k = linear_index(i, j, self.n)?;
        Ok(self
            .entries
            .binary_search_by_key(&k, |e| e.0)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0))
    }

    /// Non-zero cells as `((i, j), value)`.
    pub fn cells(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        let n = u64::from(self.n);
        self.entries
            .iter()
            .map(move |&(k, v)| (((k / n) as u32, (k % n) as u32), v))
    }

    /// Multiplies every value by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Svmf> {
        Svmf::from_entries(self.n, self.entries.iter().map(|&(k, v)| (k, v * factor)))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SVMF_HEADER_LEN + 16 * self.entries.len());
        self.encode_into(&mut out);
        out
    }

    pub(crate) fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(SVMF_MAGIC);
        out.push(SVMF_VERSION);
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for &(k, v) in &self.entries {
            out.extend_from_slice(&k.to_le_bytes());
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Svmf> {
        let mut reader = ByteReader::new(bytes);
        let fp = Svmf::decode_from(&mut reader)?;
        reader.finish()?;
        Ok(fp)
    }

    pub(crate) fn decode_from(reader: &mut ByteReader<'_>) -> Result<Svmf> {
        let magic = reader.array::<4>("fingerprint magic")?;
        if &magic != SVMF_MAGIC {
            return Err(Error::Format(format!("bad fingerprint magic {magic:?}")));
        }
        let version = reader.u8("fingerprint version")?;
        if version != SVMF_VERSION {
            return Err(Error::Version {
                found: version,
                expected: SVMF_VERSION,
            });
        }
        let n = reader.u32("fingerprint dimension")?;
        if n == 0 {
            return Err(Error::Format("fingerprint dimension is zero".into()));
        }
        let count = reader.u32("entry count")? as usize;
        if count.saturating_mul(16) > reader.remaining() {
            return Err(Error::Format(format!(
                "entry count {count} exceeds the {} remaining bytes",
                reader.remaining()
            )));
        }
        let mut entries = Vec::with_capacity(count);
        let mut prev: Option<u64> = None;
        for _ in 0..count {
            let k = reader.u64("entry index")?;
            let v = reader.f64("entry value")?;
            if prev.is_some_and(|p| k <= p) {
                return Err(Error::Format(format!("entry index {k} out of order")));
            }
            cell_of(k, n).map_err(|e| Error::Format(e.to_string()))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Format(format!("non-positive value {v} at index {k}")));
            }
            prev = Some(k);
            entries.push((k, v));
        }
        Ok(Svmf { n, entries })
    }

    pub fn to_json_form(&self) -> SvmfJson {
        SvmfJson {
            n: self.n,
            entries: self.entries.iter().copied().collect(),
        }
    }

    pub fn from_json_form(json: &SvmfJson) -> Result<Svmf> {
        Svmf::from_entries(json.n, json.entries.iter().map(|(&k, &v)| (k, v)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_json_form()).expect("fingerprints always serialize")
    }

    pub fn from_json(text: &str) -> Result<Svmf> {
        let json: SvmfJson =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("fingerprint JSON: {e}")))?;
        Svmf::from_json_form(&json)
    }
}

/// Human-readable form: `{"n": 12, "entries": {"13": 10.0}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmfJson {
    pub n: u32,
    pub entries: BTreeMap<u64, f64>,
}

pub fn encode_svmf(fp: &Svmf) -> Vec<u8> {
    fp.encode()
}

pub fn decode_svmf(bytes: &[u8]) -> Result<Svmf> {
    Svmf::decode(bytes)
}

pub fn nnz(fp: &Svmf) -> usize {
    fp.nnz()
}

/// Pair tallies per cell, indexed by `[distance][carbon endpoints]`.
/// Counting first and weighting afterwards makes the result independent of
/// instance order down to the last bit.
type Tally = Vec<[u64; 3]>;

/// Computes the fingerprint of a substructure graph.
pub fn compute_svmf(g: &SubstructureGraph, catalog: &Catalog, hp: &Hyperparams) -> Result<Svmf> {
    hp.validate()?;
    let n = catalog.n();
    let kinds: Vec<SubstructureKind> = g
        .nodes()
        .iter()
        .map(|node| catalog.kind_of(node.class_id))
        .collect::<Result<_>>()?;

    let mut counts: BTreeMap<ClassId, u64> = BTreeMap::new();
    for node in g.nodes() {
        *counts.entry(node.class_id).or_default() += 1;
    }

    let cap = hp.distance_cap();
    let mut tallies: BTreeMap<(ClassId, ClassId), Tally> = BTreeMap::new();
    for (a, b, d) in g.capped_pair_distances(cap) {
        let (ca, cb) = (g.nodes()[a].class_id, g.nodes()[b].class_id);
        let carbon = [kinds[a], kinds[b]]
            .iter()
            .filter(|k| **k == SubstructureKind::CarbonBackbone)
            .count();
        let tally = tallies
            .entry((ca.min(cb), ca.max(cb)))
            .or_insert_with(|| vec![[0; 3]; cap as usize + 1]);
        tally[d as usize][carbon] += 1;
    }

    let mut values: BTreeMap<(ClassId, ClassId), f64> = BTreeMap::new();
    for (cell, tally) in &tallies {
        let mut g_value = 0.0;
        for (d, per_carbon) in tally.iter().enumerate() {
            for (carbon, &count) in per_carbon.iter().enumerate() {
                if count > 0 {
                    g_value += count as f64 * hp.pair_weight(d as u32, carbon as u32);
                }
            }
        }
        values.insert(*cell, g_value);
    }
    for (&class, &count) in &counts {
        *values.entry((class, class)).or_insert(0.0) += hp.h1 * count as f64;
    }

    let entries = values
        .into_iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|((i, j), v)| Ok((linear_index(i, j, n)?, v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Svmf { n, entries })
}

/// Fingerprint from ground-truth substructure matches. Two matches are linked
/// when their atom sets intersect or, if `bonds` is given, when a bond joins
/// an atom of one to an atom of the other.
pub fn svmf_from_matches(
    matches: &[(ClassId, BTreeSet<usize>)],
    bonds: Option<&[(usize, usize)]>,
    catalog: &Catalog,
    hp: &Hyperparams,
) -> Result<Svmf> {
    let mut atom_owners: HashMap<usize, Vec<usize>> = HashMap::new();
    for (pos, (class_id, atoms)) in matches.iter().enumerate() {
        catalog.get(*class_id)?;
        if atoms.is_empty() {
            return Err(Error::Validation(format!("match {pos} has an empty atom set")));
        }
        for &atom in atoms {
            atom_owners.entry(atom).or_default().push(pos);
        }
    }

    let mut edges: BTreeSet<(u64, u64)> = BTreeSet::new();
    let mut link = |a: usize, b: usize| {
        if a != b {
            edges.insert((a.min(b) as u64, a.max(b) as u64));
        }
    };
    for owners in atom_owners.values() {
        for (x, &a) in owners.iter().enumerate() {
            for &b in &owners[x + 1..] {
                link(a, b);
            }
        }
    }
    for &(u, v) in bonds.unwrap_or(&[]) {
        if let (Some(us), Some(vs)) = (atom_owners.get(&u), atom_owners.get(&v)) {
            for &a in us {
                for &b in vs {
                    link(a, b);
                }
            }
        }
    }

    let nodes = matches
        .iter()
        .enumerate()
        .map(|(pos, (class_id, _))| (pos as u64, *class_id))
        .collect();
    let edges: Vec<_> = edges.into_iter().collect();
    let g = SubstructureGraph::from_edges("matches", nodes, &edges)?;
    compute_svmf(&g, catalog, hp)
}

/// Fingerprints one detection set end to end: score filter, class
/// validation, graph construction and coefficient computation.
pub fn fingerprint_detections(
    set: &DetectionSet,
    catalog: &Catalog,
    hp: &Hyperparams,
    score_threshold: f64,
) -> Result<Svmf> {
    hp.validate()?;
    let set = set.filter_by_score(score_threshold);
    set.validate_classes(catalog)?;
    let g = build_graph(&set, hp.expansion_factor)?;
    compute_svmf(&g, catalog, hp)
}
