//! Recurrent tone classification for Mandarin syllables.
//!
//! The crate provides the complete modelling pipeline as a library:
//!
//! * [`features`] — per-speaker normalization, frame splicing, tone-segment
//!   extraction and duration statistics;
//! * [`encoder`] — an Elman recurrent encoder with last/average/max pooling
//!   and forward/backward/bidirectional variants;
//! * [`classifier`] — a softmax tone classifier over pooled encodings,
//!   optionally extended with neighbouring-syllable encodings and a small
//!   sigmoid duration branch;
//! * [`training`] — full-backpropagation-through-time gradients, minibatch
//!   SGD, and a finite-difference gradient checker;
//! * [`syncorpus`] — a deterministic synthetic tone corpus generator;
//! * [`eval`] — accuracy/confusion evaluation and a configuration grid
//!   harness for trend experiments.
//!
//! The crate is `no_std` (with `alloc`); enable the `std` feature to pull in
//! the standard library for dependants that want it.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod classifier;
pub mod encoder;
pub mod eval;
pub mod features;
mod math;
pub mod syncorpus;
pub mod training;

pub use classifier::{ClassifierConfig, ClassifierParams, DurationParams, TonePosterior};
pub use encoder::{CellParams, Direction, EncoderConfig, EncoderParams, Pooling, ToneEmbedding};
pub use eval::{EvalReport, GridOutcome, GridRow, GridSpec};
pub use features::{
    DurationStats, FeatureFrame, SegmentScope, SpliceConfig, SyllableSegment, ToneLabel, Utterance,
    TONE_COUNT,
};
pub use syncorpus::GeneratorSpec;
pub use training::{Gradients, Hyperparams, ModelConfig, ModelParams, TrainingExample};
