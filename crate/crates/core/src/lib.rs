//! Chord recognition toolkit: chord notation, vocabularies, annotation
//! alignment, CQT feature files, frame classifiers, HMM smoothing, WCSR
//! evaluation and synthetic data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annotate;
pub mod decode;
pub mod features;
pub mod harte;
pub mod metrics;
pub mod model;
pub mod par;
pub mod pitch;
pub mod synthgen;
pub mod vocab;

pub use annotate::{Annotation, FrameGrid};
pub use features::FeatureMatrix;
pub use harte::{ChordLabel, Quality};
pub use model::{ChordModel, TrainConfig};
pub use par::Execution;
pub use vocab::{ChordId, Vocabulary};
