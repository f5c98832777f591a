//! Few-shot multilingual natural language inference on a compact masked
//! language model, comparing a finetuned classifier (FT) against discrete
//! (DP), soft (SP), and mixed (MP) cloze prompting.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`] — dense 2-D tensors with reverse-mode autodiff and Adam
//! - [`tokenizer`] — deterministic word-level vocabulary with special and
//!   reserved pseudo-token ids
//! - [`model`] — transformer encoder with an MLM head, a linear classifier
//!   head, toy-scale pretraining, and a binary checkpoint format
//! - [`prompt`] — template DSL, verbalizers, prompt packs, cloze scoring
//! - [`softprompt`] — trainable soft-prompt bank reparameterized through a
//!   bidirectional LSTM and an affine projection
//! - [`data`] — translation-aligned NLI corpora, stratified few-shot
//!   sampling, and a synthetic multilingual corpus generator
//! - [`harness`] — training loops, crosslingual transfer and in-language
//!   protocols, seed sweeps, and report tables
//!
//! All randomness flows through [`rng`] (ChaCha8 with documented stream
//! ids), so a `(config, seed, corpus)` triple fully determines every
//! emitted number.

pub mod data;
pub mod harness;
pub mod model;
pub mod parallel;
pub mod prompt;
pub mod rng;
pub mod softprompt;
pub mod tensor;
pub mod tokenizer;






pub use tensor::{Graph, ParamGroup, Var};
pub use tokenizer::Vocabulary;
