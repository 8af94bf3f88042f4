//! Fingerprint comparison and ranked retrieval.
//!
//! The comparison score is `|a - b| / |a + b|` under the Euclidean norm. It is
//! zero for identical fingerprints and one for fingerprints with disjoint
//! support, so results rank in ascending order. Ties keep insertion order.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::ByteReader;
use crate::error::{Error, Result};
use crate::fingerprint::Svmf;
use crate::io::atomic_write;

pub const INDEX_MAGIC: &[u8; 4] = b"SVIX";
pub const INDEX_VERSION: u8 = 1;

/// Dissimilarity between two fingerprints of the same dimension, in `[0, 1]`.
/// Two empty fingerprints score 0.
pub fn similarity(a: &Svmf, b: &Svmf) -> Result<f64> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            left: a.n(),
            right: b.n(),
        });
    }
    let (xs, ys) = (a.entries(), b.entries());
    let (mut i, mut j) = (0, 0);
    let mut diff2 = 0.0;
    let mut sum2 = 0.0;
    let mut accumulate = |x: f64, y: f64| {
        let d = x - y;
        let s = x + y;
        diff2 += d * d;
        sum2 += s * s;
    };
    while i < xs.len() && j < ys.len() {
        let (kx, vx) = xs[i];
        let (ky, vy) = ys[j];
        if kx == ky {
            accumulate(vx, vy);
            i += 1;
            j += 1;
        } else if kx < ky {
            accumulate(vx, 0.0);
            i += 1;
        } else {
            accumulate(0.0, vy);
            j += 1;
        }
    }
    xs[i..].iter().for_each(|&(_, v)| accumulate(v, 0.0));
    ys[j..].iter().for_each(|&(_, v)| accumulate(0.0, v));
    if sum2 == 0.0 {
        return Ok(0.0);
    }
    Ok(diff2.sqrt() / sum2.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub rank: usize,
    pub key: String,
    pub score: f64,
}

/// Keyed fingerprint collection in insertion order. The first insertion
/// fixes the dimension unless it was set at construction.
#[derive(Debug, Clone, Default)]
pub struct FingerprintIndex {
    n: Option<u32>,
    keys: Vec<String>,
    fingerprints: Vec<Svmf>,
    positions: HashMap<String, usize>,
}

impl PartialEq for FingerprintIndex {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.keys == other.keys && self.fingerprints == other.fingerprints
    }
}

impl FingerprintIndex {
    pub fn new() -> Self {
        FingerprintIndex::default()
    }

    pub fn with_dimension(n: u32) -> Self {
        FingerprintIndex {
            n: Some(n),
            ..FingerprintIndex::default()
        }
    }

    pub fn dimension(&self) -> Option<u32> {
        self.n
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.positions.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Svmf)> {
        self.keys.iter().map(String::as_str).zip(&self.fingerprints)
    }

    pub fn get(&self, key: &str) -> Option<&Svmf> {
        self.positions.get(key).map(|&p| &self.fingerprints[p])
    }

    pub fn add(&mut self, key: impl Into<String>, fp: Svmf) -> Result<()> {
        let key = key.into();
        if key.len() > usize::from(u16::MAX) {
            return Err(Error::Validation(format!(
                "key of {} bytes exceeds the {} byte limit",
                key.len(),
                u16::MAX
            )));
        }
        if self.positions.contains_key(&key) {
            return Err(Error::Conflict(format!("key {key:?} already indexed")));
        }
        if let Some(n) = self.n {
            if n != fp.n() {
                return Err(Error::DimensionMismatch { left: n, right: fp.n() });
            }
        }
        self.n = Some(fp.n());
        self.positions.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        self.fingerprints.push(fp);
        Ok(())
    }

    /// Score of every entry against `query`, in insertion order.
    pub fn scores(&self, query: &Svmf) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::Empty("index has no entries".into()));
        }
        self.fingerprints
            .iter()
            .map(|fp| similarity(query, fp))
            .collect()
    }

    /// Best `k` entries by ascending score; `k` beyond the index size returns
    /// the full ranking.
    pub fn search(&self, query: &Svmf, k: usize) -> Result<Vec<RankedResult>> {
        if k == 0 {
            return Err(Error::Domain("k must be at least 1".into()));
        }
        let scores = self.scores(query)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        // stable sort keeps insertion order among ties
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        Ok(order
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(r, pos)| RankedResult {
                rank: r + 1,
                key: self.keys[pos].clone(),
                score: scores[pos],
            })
            .collect())
    }

    /// 1-based position of `target_key`: one plus the entries scoring strictly
    /// lower plus the tied entries inserted before it.
    pub fn rank_of(&self, query: &Svmf, target_key: &str) -> Result<usize> {
        let target = *self
            .positions
            .get(target_key)
            .ok_or_else(|| Error::Lookup(format!("key {target_key:?} not in index")))?;
        let scores = self.scores(query)?;
        let t = scores[target];
        let ahead = scores
            .iter()
            .enumerate()
            .filter(|&(pos, &s)| s < t || (s == t && pos < target))
            .count();
        Ok(ahead + 1)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        out.push(INDEX_VERSION);
        out.extend_from_slice(&self.n.unwrap_or(0).to_le_bytes());
        out.extend_from_slice(&(self.keys.len() as u32).to_le_bytes());
        for (key, fp) in self.keys.iter().zip(&self.fingerprints) {
            out.extend_from_slice(&(key.len() as u16).to_le_bytes());
            out.extend_from_slice(key.as_bytes());
            fp.encode_into(&mut out);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut reader = ByteReader::new(bytes);
        let magic = reader.array::<4>("index magic")?;
        if &magic != INDEX_MAGIC {
            return Err(Error::Format(format!("bad index magic {magic:?}")));
        }
        let version = reader.u8("index version")?;
        if version != INDEX_VERSION {
            return Err(Error::Version {
                found: version,
                expected: INDEX_VERSION,
            });
        }
        let n = reader.u32("index dimension")?;
        let count = reader.u32("index entry count")?;
        let mut index = if n == 0 {
            FingerprintIndex::new()
        } else {
            FingerprintIndex::with_dimension(n)
        };
        for _ in 0..count {
            let len = reader.u16("key length")?;
            let key = std::str::from_utf8(reader.take(usize::from(len), "key")?)
                .map_err(|e| Error::Format(format!("key is not UTF-8: {e}")))?
                .to_string();
            let fp = Svmf::decode_from(&mut reader)?;
            if n == 0 {
                return Err(Error::Format("entries present in an index without dimension".into()));
            }
            index.add(key, fp).map_err(|e| Error::Format(e.to_string()))?;
        }
        reader.finish()?;
        Ok(index)
    }

    /// Writes the encoded index atomically.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        atomic_write(path, &self.encode())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        FingerprintIndex::decode(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(entries: &[(u64, f64)]) -> Svmf {
        Svmf::from_entries(12, entries.iter().copied()).unwrap()
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity(&fp(&[(5, 10.0)]), &fp(&[(5, 10.0)])).unwrap(), 0.0);
        assert_eq!(similarity(&fp(&[(5, 10.0)]), &fp(&[(6, 10.0)])).unwrap(), 1.0);
        assert_eq!(similarity(&fp(&[(5, 10.0)]), &fp(&[(5, 30.0)])).unwrap(), 0.5);
        assert_eq!(similarity(&Svmf::empty(12), &Svmf::empty(12)).unwrap(), 0.0);
        assert_eq!(similarity(&Svmf::empty(12), &fp(&[(0, 3.0)])).unwrap(), 1.0);
        assert!(matches!(
            similarity(&Svmf::empty(12), &Svmf::empty(13)),
            Err(Error::DimensionMismatch { left: 12, right: 13 })
        ));
    }

    #[test]
    fn add_rules() {
        let mut idx = FingerprintIndex::new();
        idx.add("a", fp(&[(0, 1.0)])).unwrap();
        assert_eq!(idx.len(), 1);
        assert!(matches!(idx.add("a", fp(&[(0, 1.0)])), Err(Error::Conflict(_))));
        assert!(matches!(idx.add("b", Svmf::empty(7)), Err(Error::DimensionMismatch { .. })));
        assert_eq!(idx.len(), 1);
    }

    /// Entries realizing scores 0.7 and 0.2 against query {0: 10}.
    fn two_entry_index() -> (FingerprintIndex, Svmf) {
        // |10 - y| / (10 + y) = s  =>  y = 10 (1 - s) / (1 + s)
        let y = |s: f64| 10.0 * (1.0 - s) / (1.0 + s);
        let mut idx = FingerprintIndex::new();
        idx.add("far", fp(&[(0, y(0.7))])).unwrap();
        idx.add("near", fp(&[(0, y(0.2))])).unwrap();
        (idx, fp(&[(0, 10.0)]))
    }

    #[test]
    fn search_orders_by_score() {
        let (idx, q) = two_entry_index();
        let hits = idx.search(&q, 2).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!((hits[0].rank, hits[0].key.as_str()), (1, "near"));
        assert_eq!((hits[1].rank, hits[1].key.as_str()), (2, "far"));
        assert!((hits[0].score - 0.2).abs() < 1e-12);
        assert!((hits[1].score - 0.7).abs() < 1e-12);
        assert_eq!(idx.search(&q, 10).unwrap().len(), 2);
        assert!(idx.search(&q, 0).is_err());
        assert!(matches!(FingerprintIndex::new().search(&q, 1), Err(Error::Empty(_))));
    }

    #[test]
    fn exact_match_ranks_first() {
        let (mut idx, q) = two_entry_index();
        idx.add("self", q.clone()).unwrap();
        let top = idx.search(&q, 1).unwrap();
        assert_eq!(top[0].key, "self");
        assert_eq!(top[0].score, 0.0);
        assert_eq!(idx.rank_of(&q, "self").unwrap(), 1);
        assert_eq!(idx.rank_of(&q, "near").unwrap(), 2);
        assert_eq!(idx.rank_of(&q, "far").unwrap(), 3);
        assert!(matches!(idx.rank_of(&q, "missing"), Err(Error::Lookup(_))));
    }

    #[test]
    fn ties_resolve_by_insertion_order() {
        let q = fp(&[(0, 10.0)]);
        let mut idx = FingerprintIndex::new();
        idx.add("first", fp(&[(0, 20.0)])).unwrap();
        idx.add("second", fp(&[(0, 20.0)])).unwrap();
        assert_eq!(idx.rank_of(&q, "first").unwrap(), 1);
        assert_eq!(idx.rank_of(&q, "second").unwrap(), 2);
        let keys: Vec<_> = idx.search(&q, 2).unwrap().into_iter().map(|r| r.key).collect();
        assert_eq!(keys, vec!["first", "second"]);
    }

    #[test]
    fn index_round_trip_and_corruption() {
        let (idx, _) = two_entry_index();
        let bytes = idx.encode();
        assert_eq!(&bytes[..4], b"SVIX");
        let back = FingerprintIndex::decode(&bytes).unwrap();
        assert_eq!(back, idx);
        let keys: Vec<_> = back.iter().map(|(k, _)| k.to_string()).collect();
        assert_eq!(keys, vec!["far", "near"]);
        assert_eq!(back.encode(), bytes);

        let empty = FingerprintIndex::new();
        assert_eq!(FingerprintIndex::decode(&empty.encode()).unwrap(), empty);
        let sized = FingerprintIndex::with_dimension(12);
        assert_eq!(FingerprintIndex::decode(&sized.encode()).unwrap(), sized);

        for cut in [1, 5, 13, bytes.len() - 1] {
            assert!(matches!(FingerprintIndex::decode(&bytes[..cut]), Err(Error::Format(_))));
        }
        let mut v = bytes.clone();
        v[4] = 2;
        assert!(matches!(FingerprintIndex::decode(&v), Err(Error::Version { .. })));
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.svix");
        let (idx, _) = two_entry_index();
        idx.save(&path).unwrap();
        assert_eq!(FingerprintIndex::load(&path).unwrap(), idx);
    }
}
