//! File formats: MNIST IDX files, the bundled text corpus, curves, JSON
//! artifacts and the run directory layout.

mod artifact;
mod corpus;
mod curve;
mod idx;
pub mod nested;

pub use artifact::{read_jsonl, write_atomic, write_jsonl, RunArtifact, RunDir};
pub use corpus::{bundled_corpus, CharVocab};
pub use curve::{emit_curve, read_curve_csv, CurveFormat, Series};
pub use idx::{mnist_dir, read_idx, read_images, read_labels, IdxArray, MNIST_ENV};
