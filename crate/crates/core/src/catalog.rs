//! Substructure class catalog.
//!
//! The catalog fixes the fingerprint dimension `n` and partitions classes into
//! functional groups and carbon backbones. It is read from a tab-separated
//! file with a header (columns shown space-aligned here):
//!
//! ```text
//! class_id  kind  name      smarts
//! 0         FG    hydroxyl  [OX2H]
//! 1         CB    propyl    CCC
//! ```
//!
//! The `smarts` column is carried as an opaque string.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Index of a substructure class inside a [`Catalog`].
pub type ClassId = u32;

pub const REFERENCE_CATALOG_TSV: &str = include_str!("../data/reference_catalog.tsv");

pub const CATALOG_HEADER: &str = "class_id\tkind\tname\tsmarts";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SubstructureKind {
    FunctionalGroup,
    CarbonBackbone,
}

impl SubstructureKind {
    pub fn code(self) -> &'static str {
        match self {
            SubstructureKind::FunctionalGroup => "FG",
            SubstructureKind::CarbonBackbone => "CB",
        }
    }
}

impl fmt::Display for SubstructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for SubstructureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "FG" => Ok(SubstructureKind::FunctionalGroup),
            "CB" => Ok(SubstructureKind::CarbonBackbone),
            other => Err(format!("unknown kind {other:?} (expected FG or CB)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstructureClass {
    pub class_id: ClassId,
    pub kind: SubstructureKind,
    pub name: String,
    pub smarts: String,
}

/// Validated, immutable list of substructure classes ordered by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    classes: Vec<SubstructureClass>,
}

impl Catalog {
    /// Builds a catalog from classes in any order.
    ///
    /// Ids must be unique and cover `0..n` without gaps, and both kinds must
    /// be represented.
    pub fn new(mut classes: Vec<SubstructureClass>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Validation("catalog has no classes".into()));
        }
        if classes.len() > u32::MAX as usize {
            return Err(Error::Validation("catalog too large".into()));
        }
        classes.sort_by_key(|c| c.class_id);
        for pair in classes.windows(2) {
            if pair[0].class_id == pair[1].class_id {
                return Err(Error::Validation(format!(
                    "duplicate class_id {}",
                    pair[0].class_id
                )));
            }
        }
        for (expected, class) in classes.iter().enumerate() {
            if class.class_id as usize != expected {
                return Err(Error::Validation(format!(
                    "class_id range has a gap: missing {expected}"
                )));
            }
        }
        let has_fg = classes
            .iter()
            .any(|c| c.kind == SubstructureKind::FunctionalGroup);
        let has_cb = classes
            .iter()
            .any(|c| c.kind == SubstructureKind::CarbonBackbone);
        if !has_fg || !has_cb {
            return Err(Error::Validation(
                "catalog must contain both FG and CB classes".into(),
            ));
        }
        Ok(Catalog { classes })
    }

    /// Parses the TSV catalog format. Line numbers in errors are 1-based.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.split('\n').enumerate();
        match lines.next() {
            Some((_, header)) if header.trim_end_matches('\r') == CATALOG_HEADER => {}
            Some((_, header)) => {
                return Err(Error::parse(
                    1,
                    format!("expected header {CATALOG_HEADER:?}, found {header:?}"),
                ))
            }
            None => return Err(Error::parse(1, "missing header")),
        }

        let mut classes = Vec::new();
        for (idx, raw) in lines {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::parse(
                    line_no,
                    format!("expected 4 tab-separated fields, found {}", fields.len()),
                ));
            }
            let class_id = fields[0]
                .parse::<ClassId>()
                .map_err(|e| Error::parse(line_no, format!("bad class_id {:?}: {e}", fields[0])))?;
            let kind = fields[1]
                .parse::<SubstructureKind>()
                .map_err(|e| Error::parse(line_no, e))?;
            classes.push(SubstructureClass {
                class_id,
                kind,
                name: fields[2].to_string(),
                smarts: fields[3].to_string(),
            });
        }
        Catalog::new(classes)
    }

    pub fn from_reader(mut reader: impl Read) -> Result<Self> {
        let mut text = String::new();
        reader
            .read_to_string(&mut text)
            .map_err(|e| Error::Format(format!("catalog is not valid UTF-8 text: {e}")))?;
        Catalog::parse(&text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Catalog::from_reader(file)
    }

    /// Serializes back to the TSV format.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(CATALOG_HEADER);
        out.push('\n');
        for c in &self.classes {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", c.class_id, c.kind, c.name, c.smarts));
        }
        out
    }

    /// The bundled 1561-class catalog: 1534 functional groups followed by 27
    /// carbon backbones.
    pub fn reference() -> Catalog {
        Catalog::parse(REFERENCE_CATALOG_TSV).expect("bundled catalog is valid")
    }

    /// Number of classes, i.e. the fingerprint dimension.
    pub fn n(&self) -> u32 {
        self.classes.len() as u32
    }

    pub fn classes(&self) -> &[SubstructureClass] {
        &self.classes
    }

    pub fn get(&self, class_id: ClassId) -> Result<&SubstructureClass> {
        self.classes.get(class_id as usize).ok_or_else(|| {
            Error::Lookup(format!(
                "class_id {class_id} outside catalog range 0..{}",
                self.classes.len()
            ))
        })
    }

    pub fn kind_of(&self, class_id: ClassId) -> Result<SubstructureKind> {
        self.get(class_id).map(|c| c.kind)
    }

    pub fn count_of(&self, kind: SubstructureKind) -> usize {
        self.classes.iter().filter(|c| c.kind == kind).count()
    }

    /// Small catalog where ids listed in `carbon` are carbon backbones and the
    /// rest are functional groups. Handy for tests and examples.
    pub fn toy(n: u32, carbon: &[ClassId]) -> Result<Self> {
        let classes = (0..n)
            .map(|id| {
                let kind = if carbon.contains(&id) {
                    SubstructureKind::CarbonBackbone
                } else {
                    SubstructureKind::FunctionalGroup
                };
                SubstructureClass {
                    class_id: id,
                    kind,
                    name: format!("{}_{id}", kind.code().to_lowercase()),
                    smarts: String::new(),
                }
            })
            .collect();
        Catalog::new(classes)
    }
}
