//! On-disk formats: VFT1 feature files, annotation JSON, dataset manifests
//! and split lists.

pub mod annotations;
pub mod features;
pub mod manifest;
pub mod splits;

pub use annotations::{load_annotations, write_annotations, AnnotationSet};
pub use features::{read_features, write_features, FeatureSequence};
pub use manifest::{validate_manifest, DatasetManifest, Issue, Role, ValidationReport, VideoEntry};
pub use splits::{generate_splits, Split, SplitSet};
