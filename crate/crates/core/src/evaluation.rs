//! Detection and retrieval metrics.
//!
//! Detection quality compares predicted and ground-truth substructure
//! multisets without regard to position. Matching takes the per-class minimum
//! count, so with `m` matched instances the F1 score is
//! `2m / (|pred| + |truth|)`.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::catalog::ClassId;
use crate::error::{Error, Result};
use crate::fingerprint::Svmf;
use crate::retrieval::FingerprintIndex;

/// Class counts; absent classes count zero and stored counts are positive.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<ClassId, u64>", into = "BTreeMap<ClassId, u64>")]
pub struct SubstructureMultiset {
    counts: BTreeMap<ClassId, u64>,
}

impl TryFrom<BTreeMap<ClassId, u64>> for SubstructureMultiset {
    type Error = Error;

    fn try_from(counts: BTreeMap<ClassId, u64>) -> Result<Self> {
        if let Some((class, _)) = counts.iter().find(|(_, &c)| c == 0) {
            return Err(Error::Validation(format!("class {class} has count 0")));
        }
        Ok(SubstructureMultiset { counts })
    }
}

impl From<SubstructureMultiset> for BTreeMap<ClassId, u64> {
    fn from(m: SubstructureMultiset) -> Self {
        m.counts
    }
}

impl FromIterator<ClassId> for SubstructureMultiset {
    fn from_iter<I: IntoIterator<Item = ClassId>>(iter: I) -> Self {
        let mut counts = BTreeMap::new();
        for class in iter {
            *counts.entry(class).or_insert(0) += 1;
        }
        SubstructureMultiset { counts }
    }
}

impl SubstructureMultiset {
    pub fn new() -> Self {
        SubstructureMultiset::default()
    }

    pub fn from_counts(counts: impl IntoIterator<Item = (ClassId, u64)>) -> Result<Self> {
        SubstructureMultiset::try_from(counts.into_iter().collect::<BTreeMap<_, _>>())
    }

    pub fn count(&self, class: ClassId) -> u64 {
        self.counts.get(&class).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Instances matched under per-class minimum counts.
    pub fn matched(&self, other: &SubstructureMultiset) -> u64 {
        self.counts
            .iter()
            .map(|(class, &c)| c.min(other.count(*class)))
            .sum()
    }
}

pub fn substructure_precision_recall(
    pred: &SubstructureMultiset,
    gt: &SubstructureMultiset,
) -> (f64, f64) {
    let matched = pred.matched(gt) as f64;
    let ratio = |total: u64| if total == 0 { 1.0 } else { matched / total as f64 };
    (ratio(pred.total()), ratio(gt.total()))
}

/// Substructure F1 in `[0, 1]`. Both empty gives 1, exactly one empty gives 0.
pub fn substructure_f1(pred: &SubstructureMultiset, gt: &SubstructureMultiset) -> f64 {
    let total = pred.total() + gt.total();
    if total == 0 {
        return 1.0;
    }
    2.0 * pred.matched(gt) as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub molecule_key: String,
    pub predicted: SubstructureMultiset,
    pub ground_truth: SubstructureMultiset,
}

impl EvalRecord {
    pub fn f1(&self) -> f64 {
        substructure_f1(&self.predicted, &self.ground_truth)
    }
}

/// Parses evaluation JSONL: `{"molecule_key", "predicted", "ground_truth"}`.
pub fn parse_eval_records(reader: impl BufRead) -> Result<Vec<EvalRecord>> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EvalRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(idx + 1, e.to_string()))?;
        if record.molecule_key.is_empty() {
            return Err(Error::Validation(format!("line {}: molecule_key is empty", idx + 1)));
        }
        records.push(record);
    }
    Ok(records)
}

/// Percentage of records whose S-F1 is exactly 1.
pub fn molecule_exact_match(records: &[EvalRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Empty("no evaluation records".into()));
    }
    let perfect = records.iter().filter(|r| r.f1() == 1.0).count();
    Ok(100.0 * perfect as f64 / records.len() as f64)
}

/// Detection summary. `s_f1` is the macro average of per-record F1, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub records: usize,
    pub s_f1: f64,
    pub m_em: f64,
    pub averaging: String,
}

impl DetectionReport {
    /// Both metrics rounded to one decimal.
    pub fn rounded(&self) -> DetectionReport {
        let r = |v: f64| (v * 10.0).round() / 10.0;
        DetectionReport {
            s_f1: r(self.s_f1),
            m_em: r(self.m_em),
            ..self.clone()
        }
    }
}

pub fn aggregate_detection_report(records: &[EvalRecord]) -> Result<DetectionReport> {
    let m_em = molecule_exact_match(records)?;
    let mean = records.iter().map(EvalRecord::f1).sum::<f64>() / records.len() as f64;
    Ok(DetectionReport {
        records: records.len(),
        s_f1: 100.0 * mean,
        m_em,
        averaging: "macro".into(),
    })
}

/// Mean 1-based rank of each query's target in `index`.
pub fn average_rank(queries: &[(Svmf, String)], index: &FingerprintIndex) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Empty("no retrieval queries".into()));
    }
    let mut total = 0usize;
    for (query, target) in queries {
        total += index.rank_of(query, target)?;
    }
    Ok(total as f64 / queries.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(counts: &[(ClassId, u64)]) -> SubstructureMultiset {
        SubstructureMultiset::from_counts(counts.iter().copied()).unwrap()
    }

    fn record(key: &str, pred: &[(ClassId, u64)], gt: &[(ClassId, u64)]) -> EvalRecord {
        EvalRecord {
            molecule_key: key.into(),
            predicted: ms(pred),
            ground_truth: ms(gt),
        }
    }

    #[test]
    fn f1_examples() {
        assert_eq!(substructure_f1(&ms(&[(0, 1), (1, 1)]), &ms(&[(0, 1), (1, 1)])), 1.0);
        assert_eq!(substructure_f1(&ms(&[(0, 2)]), &ms(&[(0, 1)])), 2.0 / 3.0);
        assert_eq!(substructure_precision_recall(&ms(&[(0, 2)]), &ms(&[(0, 1)])), (0.5, 1.0));
        assert_eq!(substructure_f1(&ms(&[]), &ms(&[(0, 1)])), 0.0);
        assert_eq!(substructure_f1(&ms(&[]), &ms(&[])), 1.0);
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(SubstructureMultiset::from_counts([(3, 0)]).is_err());
        let bad = r#"{"molecule_key": "m", "predicted": {"1": 0}, "ground_truth": {}}"#;
        assert!(parse_eval_records(bad.as_bytes()).is_err());
    }

    #[test]
    fn exact_match_percentages() {
        let perfect = record("p", &[(1, 1)], &[(1, 1)]);
        let imperfect = record("i", &[(1, 1)], &[(2, 1)]);
        let recs = vec![perfect.clone(), perfect.clone(), imperfect.clone(), imperfect.clone()];
        assert_eq!(molecule_exact_match(&recs).unwrap(), 50.0);
        assert_eq!(molecule_exact_match(&recs[..2]).unwrap(), 100.0);
        assert_eq!(molecule_exact_match(&recs[2..]).unwrap(), 0.0);
        assert!(matches!(molecule_exact_match(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn report_examples() {
        let perfect = record("p", &[(1, 1)], &[(1, 1)]);
        let r = aggregate_detection_report(std::slice::from_ref(&perfect)).unwrap();
        assert_eq!((r.s_f1, r.m_em), (100.0, 100.0));
        // F1 = 2*1/(1+3) = 0.5
        let half = record("h", &[(1, 1)], &[(1, 3)]);
        let r = aggregate_detection_report(&[perfect, half]).unwrap();
        assert_eq!((r.s_f1, r.m_em), (75.0, 50.0));
        let miss = record("m", &[(1, 1)], &[(2, 1)]);
        let r = aggregate_detection_report(&[miss.clone(), miss]).unwrap();
        assert_eq!((r.s_f1, r.m_em), (0.0, 0.0));
        assert!(aggregate_detection_report(&[]).is_err());
    }

    #[test]
    fn parses_eval_jsonl() {
        let text = "{\"molecule_key\": \"a\", \"predicted\": {\"3\": 2}, \"ground_truth\": {\"3\": 1, \"4\": 1}}\n\n";
        let recs = parse_eval_records(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].predicted.count(3), 2);
        assert_eq!(recs[0].ground_truth.total(), 2);
        assert!(matches!(
            parse_eval_records("{\"molecule_key\": 3}".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn average_rank_examples() {
        let a = Svmf::from_entries(4, [(0, 10.0)]).unwrap();
        let b = Svmf::from_entries(4, [(0, 12.0)]).unwrap();
        let c = Svmf::from_entries(4, [(0, 20.0)]).unwrap();
        let mut idx = FingerprintIndex::new();
        idx.add("a", a.clone()).unwrap();
        idx.add("b", b).unwrap();
        idx.add("c", c).unwrap();
        assert_eq!(average_rank(&[(a.clone(), "a".into())], &idx).unwrap(), 1.0);
        // query a ranks c third
        assert_eq!(
            average_rank(&[(a.clone(), "a".into()), (a.clone(), "c".into())], &idx).unwrap(),
            2.0
        );
        assert!(matches!(average_rank(&[(a, "zz".into())], &idx), Err(Error::Lookup(_))));
    }
}
