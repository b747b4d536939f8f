//! Machine translation toolkit for diacritic-rich, low-resource language pairs.
//!
//! The crate is organised around the lifecycle of a small translation study:
//!
//! * [`corpus`] loads tab-separated parallel corpora, buckets sentences by
//!   length and produces seeded, reproducible train/validation/test splits.
//! * [`tokenizer`] normalises text and tokenizes it either keeping every
//!   accent ([`DiacriticMode::Preserve`]) or stripping combining marks
//!   ([`DiacriticMode::Strip`]), and builds vocabularies.
//! * [`numerics`] is a small dense-tensor engine with a reverse-mode gradient
//!   tape and a finite-difference checker.
//! * [`model`] is a GRU encoder-decoder with additive attention.
//! * [`training`] runs Adam with gradient clipping and reads/writes
//!   checkpoints.
//! * [`metrics`] implements corpus BLEU, the sentence-level convention used
//!   for per-example scores, and GLEU.
//! * [`cms`] is the human context-meaning-similarity scoring service: an
//!   append-only event log with an HTTP API.
//! * [`samples`] holds the small datasets the examples and tests use.
//! * [`cli`] wires all of the above into the `ffr` binary.
//!
//! Runnable walkthroughs for each capability live in the crate's `examples/`
//! directory.

pub mod cli;
pub mod cms;
pub mod corpus;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod samples;
pub mod tokenizer;
pub mod training;

pub use corpus::{CorpusStats, LengthBucket, ParallelCorpus, SentencePair, SplitSpec};
pub use metrics::{BleuConfig, EvaluationReport, Scale};
pub use model::{ModelConfig, ModelParameters};
pub use numerics::{Tape, Tensor, Var};
pub use rng::Rng;
pub use tokenizer::{DiacriticMode, EncodedSentence, Vocabulary};
pub use training::{Checkpoint, TrainConfig, TrainReport, Translator};
