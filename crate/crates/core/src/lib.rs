//! Substructure-graph fingerprints for molecule and Markush structure images.
//!
//! Detected substructure instances (class-labelled boxes) are linked into a
//! graph by expanded-box overlap. The graph becomes a sparse upper-triangular
//! fingerprint over the catalog's classes, and fingerprints are compared,
//! indexed and ranked for retrieval.
//!
//! ```
//! use svmf_core::catalog::Catalog;
//! use svmf_core::detection::{BoundingBox, DetectionInstance, DetectionSet};
//! use svmf_core::fingerprint::{fingerprint_detections, Hyperparams};
//!
//! let catalog = Catalog::toy(4, &[3]).unwrap();
//! let set = DetectionSet::new("img", vec![
//!     DetectionInstance { instance_id: 0, class_id: 1, score: 0.9, bbox: BoundingBox::new(0.0, 0.0, 10.0, 10.0) },
//!     DetectionInstance { instance_id: 1, class_id: 2, score: 0.8, bbox: BoundingBox::new(10.0, 0.0, 20.0, 10.0) },
//! ]);
//! let fp = fingerprint_detections(&set, &catalog, &Hyperparams::default(), 0.0).unwrap();
//! assert_eq!(fp.get(1, 2).unwrap(), 2.0);
//! assert_eq!(fp.nnz(), 3);
//! ```

pub mod catalog;
mod codec;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod fingerprint;
pub mod graph;
pub mod io;
pub mod retrieval;
pub mod synth;

pub use catalog::{Catalog, ClassId, SubstructureKind};
pub use detection::{BoundingBox, DetectionInstance, DetectionSet, InstanceId};
pub use error::{Error, Result};
pub use fingerprint::{compute_svmf, fingerprint_detections, Hyperparams, Svmf};
pub use graph::{build_graph, SubstructureGraph};
pub use retrieval::{similarity, FingerprintIndex, RankedResult};
