//! Detection records and the box geometry used to link them.

use std::collections::HashSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ClassId};
use crate::error::{Error, Result};

pub type InstanceId = u64;

/// Axis-aligned box in pixel coordinates. A box whose min exceeds its max on
/// either axis is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BoundingBox {
    fn from(v: [f64; 4]) -> Self {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BoundingBox {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.x_min <= self.x_max && self.y_min <= self.y_max)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// Moves every side outward by `margin`; a negative margin shrinks.
    pub fn expand(&self, margin: f64) -> BoundingBox {
        BoundingBox::new(
            self.x_min - margin,
            self.y_min - margin,
            self.x_max + margin,
            self.y_max + margin,
        )
    }

    /// Closed-rectangle intersection test: touching edges or corners overlap.
    /// Empty boxes overlap nothing.
    pub fn overlaps(&self, other: &BoundingBox) -> bool {
        if self.is_empty() || other.is_empty() {
            return false;
        }
        self.x_min <= other.x_max
            && other.x_min <= self.x_max
            && self.y_min <= other.y_max
            && other.y_min <= self.y_max
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BoundingBox {
        BoundingBox::new(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)
    }

    pub fn scale(&self, s: f64) -> BoundingBox {
        BoundingBox::new(self.x_min * s, self.y_min * s, self.x_max * s, self.y_max * s)
    }

    fn check(&self) -> std::result::Result<(), String> {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(format!("non-finite coordinate in {coords:?}"));
        }
        if self.x_min > self.x_max {
            return Err(format!("x_min {} > x_max {}", self.x_min, self.x_max));
        }
        if self.y_min > self.y_max {
            return Err(format!("y_min {} > y_max {}", self.y_min, self.y_max));
        }
        Ok(())
    }
}

/// Free-function form of [`BoundingBox::expand`].
pub fn expand_box(b: &BoundingBox, margin: f64) -> BoundingBox {
    b.expand(margin)
}

/// Free-function form of [`BoundingBox::overlaps`].
pub fn boxes_overlap(a: &BoundingBox, b: &BoundingBox) -> bool {
    a.overlaps(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionInstance {
    pub instance_id: InstanceId,
    pub class_id: ClassId,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

/// All detections from one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub image_key: String,
    pub instances: Vec<DetectionInstance>,
}

impl DetectionSet {
    pub fn new(image_key: impl Into<String>, instances: Vec<DetectionInstance>) -> Self {
        DetectionSet {
            image_key: image_key.into(),
            instances,
        }
    }

    /// Checks score range, box ordering and instance id uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.instances.len());
        for (i, inst) in self.instances.iter().enumerate() {
            if !(0.0..=1.0).contains(&inst.score) {
                return Err(Error::Validation(format!(
                    "instances[{i}].score: {} outside [0, 1]",
                    inst.score
                )));
            }
            inst.bbox
                .check()
                .map_err(|m| Error::Validation(format!("instances[{i}].box: {m}")))?;
            if !seen.insert(inst.instance_id) {
                return Err(Error::Validation(format!(
                    "instances[{i}].instance_id: duplicate id {}",
                    inst.instance_id
                )));
            }
        }
        Ok(())
    }

    /// Checks that every class id resolves in `catalog`.
    pub fn validate_classes(&self, catalog: &Catalog) -> Result<()> {
        for (i, inst) in self.instances.iter().enumerate() {
            catalog.get(inst.class_id).map_err(|_| {
                Error::Lookup(format!(
                    "instances[{i}].class_id: {} not in catalog of size {}",
                    inst.class_id,
                    catalog.n()
                ))
            })?;
        }
        Ok(())
    }

    /// Drops instances scoring below `threshold`.
    pub fn filter_by_score(&self, threshold: f64) -> DetectionSet {
        DetectionSet {
            image_key: self.image_key.clone(),
            instances: self
                .instances
                .iter()
                .filter(|inst| inst.score >= threshold)
                .cloned()
                .collect(),
        }
    }

    pub fn map_boxes(&self, f: impl Fn(&BoundingBox) -> BoundingBox) -> DetectionSet {
        DetectionSet {
            image_key: self.image_key.clone(),
            instances: self
                .instances
                .iter()
                .map(|inst| DetectionInstance {
                    bbox: f(&inst.bbox),
                    ..inst.clone()
                })
                .collect(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("detection sets always serialize")
    }
}

/// Parses detection JSONL, one set per line. Blank lines are skipped and
/// line numbers in errors are 1-based.
pub fn parse_detections(reader: impl BufRead) -> Result<Vec<DetectionSet>> {
    Ok(parse_detections_numbered(reader)?
        .into_iter()
        .map(|(_, set)| set)
        .collect())
}

/// Like [`parse_detections`], pairing each set with its 1-based line number.
pub fn parse_detections_numbered(reader: impl BufRead) -> Result<Vec<(usize, DetectionSet)>> {
    let mut sets = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let set: DetectionSet =
            serde_json::from_str(&line).map_err(|e| Error::parse(line_no, e.to_string()))?;
        set.validate().map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("line {line_no}: {m}")),
            other => other,
        })?;
        sets.push((line_no, set));
    }
    Ok(sets)
}

/// Writes sets as JSONL.
pub fn write_detections(sets: &[DetectionSet]) -> String {
    let mut out = String::new();
    for set in sets {
        out.push_str(&set.to_json_line());
        out.push('\n');
    }
    out
}

/// `factor` times the smallest box diagonal in the set.
pub fn expansion_margin(set: &DetectionSet, factor: f64) -> Result<f64> {
    let min_diag = set
        .instances
        .iter()
        .map(|inst| inst.bbox.diagonal())
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::Empty("expansion margin of a set without instances".into()))?;
    Ok(factor * min_diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inst(id: InstanceId, class_id: ClassId, b: [f64; 4]) -> DetectionInstance {
        DetectionInstance {
            instance_id: id,
            class_id,
            score: 0.9,
            bbox: b.into(),
        }
    }

    #[test]
    fn parses_two_instances() {
        let text = r#"{"image_key": "img-1", "instances": [{"instance_id": 0, "class_id": 3, "score": 0.9, "box": [0, 0, 10, 10]}, {"instance_id": 1, "class_id": 4, "score": 0.5, "box": [5, 5, 12, 14], "mask": [[0,0],[1,1]]}]}"#;
        let sets = parse_detections(text.as_bytes()).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].image_key, "img-1");
        assert_eq!(sets[0].instances.len(), 2);
        assert_eq!(sets[0].instances[1].bbox, BoundingBox::new(5.0, 5.0, 12.0, 14.0));
    }

    #[test]
    fn empty_stream_is_empty_list() {
        assert!(parse_detections(&b""[..]).unwrap().is_empty());
        assert!(parse_detections(&b"\n\n"[..]).unwrap().is_empty());
    }

    #[test]
    fn score_out_of_range_rejected() {
        let text = r#"{"image_key": "a", "instances": [{"instance_id": 0, "class_id": 0, "score": 1.3, "box": [0, 0, 1, 1]}]}"#;
        match parse_detections(text.as_bytes()) {
            Err(Error::Validation(m)) => assert!(m.contains("score"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line() {
        let text = "{\"image_key\": \"a\", \"instances\": []}\n{not json}\n";
        assert!(matches!(
            parse_detections(text.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn duplicate_instance_and_inverted_box_rejected() {
        let dup = r#"{"image_key": "a", "instances": [{"instance_id": 0, "class_id": 0, "score": 0.5, "box": [0, 0, 1, 1]}, {"instance_id": 0, "class_id": 1, "score": 0.5, "box": [0, 0, 1, 1]}]}"#;
        assert!(matches!(parse_detections(dup.as_bytes()), Err(Error::Validation(m)) if m.contains("instance_id")));
        let inverted = r#"{"image_key": "a", "instances": [{"instance_id": 0, "class_id": 0, "score": 0.5, "box": [5, 0, 1, 1]}]}"#;
        assert!(matches!(parse_detections(inverted.as_bytes()), Err(Error::Validation(m)) if m.contains("box")));
    }

    #[test]
    fn margin_uses_smallest_diagonal() {
        // diagonals 50 (30-40-50) and 100 (60-80-100)
        let set = DetectionSet::new(
            "m",
            vec![inst(0, 0, [0.0, 0.0, 30.0, 40.0]), inst(1, 0, [0.0, 0.0, 60.0, 80.0])],
        );
        assert_eq!(expansion_margin(&set, 0.1).unwrap(), 5.0);
        let single = DetectionSet::new("s", vec![inst(0, 0, [0.0, 0.0, 6.0, 8.0])]);
        assert_eq!(expansion_margin(&single, 0.1).unwrap(), 1.0);
        assert_eq!(expansion_margin(&set, 0.0).unwrap(), 0.0);
        let empty = DetectionSet::new("e", vec![]);
        assert!(matches!(expansion_margin(&empty, 0.1), Err(Error::Empty(_))));
    }

    #[test]
    fn expand_examples() {
        let b = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(expand_box(&b, 1.0), BoundingBox::new(-1.0, -1.0, 11.0, 11.0));
        assert_eq!(expand_box(&b, 0.0), b);
        assert!(expand_box(&b, -6.0).is_empty());
        assert!(!expand_box(&b, -5.0).is_empty());
    }

    #[test]
    fn overlap_examples() {
        let a = BoundingBox::new(0.0, 0.0, 5.0, 5.0);
        assert!(boxes_overlap(&a, &BoundingBox::new(5.0, 5.0, 9.0, 9.0)));
        assert!(!boxes_overlap(&a, &BoundingBox::new(6.0, 0.0, 9.0, 5.0)));
        let empty = BoundingBox::new(0.0, 0.0, 10.0, 10.0).expand(-6.0);
        assert!(!boxes_overlap(&a, &empty));
        assert!(!boxes_overlap(&empty, &empty));
    }

    #[test]
    fn score_filter() {
        let mut set = DetectionSet::new("f", vec![inst(0, 0, [0.0; 4]), inst(1, 0, [0.0; 4])]);
        set.instances[1].score = 0.2;
        assert_eq!(set.filter_by_score(0.0).instances.len(), 2);
        assert_eq!(set.filter_by_score(0.5).instances.len(), 1);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (-1e3..1e3f64, -1e3..1e3f64, 0.0..500.0f64, 0.0..500.0f64)
            .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, x + w, y + h))
    }

    // Multiples of 1/8 in a small range keep add/subtract exact.
    fn dyadic_box() -> impl Strategy<Value = BoundingBox> {
        (-4000i32..4000, -4000i32..4000, 0i32..4000, 0i32..4000).prop_map(|(x, y, w, h)| {
            let s = |v: i32| v as f64 / 8.0;
            BoundingBox::new(s(x), s(y), s(x + w), s(y + h))
        })
    }

    proptest! {
        #[test]
        fn overlap_symmetric_and_reflexive(a in arb_box(), b in arb_box()) {
            prop_assert_eq!(a.overlaps(&b), b.overlaps(&a));
            prop_assert!(a.overlaps(&a));
        }

        #[test]
        fn expand_then_shrink_restores(b in dyadic_box(), m in -200i32..200) {
            let m = m as f64 / 8.0;
            let mid = b.expand(m);
            prop_assume!(!mid.is_empty());
            prop_assert_eq!(mid.expand(-m), b);
        }

        #[test]
        fn margin_scales_linearly(boxes in prop::collection::vec(dyadic_box(), 1..8), k in 0u32..6) {
            let s = f64::from(1u32 << k);
            let set = DetectionSet::new("p", boxes.iter().enumerate().map(|(i, b)| DetectionInstance {
                instance_id: i as u64, class_id: 0, score: 1.0, bbox: *b }).collect());
            let scaled = set.map_boxes(|b| b.scale(s));
            let m = expansion_margin(&set, 0.1).unwrap();
            let ms = expansion_margin(&scaled, 0.1).unwrap();
            prop_assert_eq!(ms, m * s);
        }
    }
}
