//! Multi-sense word embeddings trained with Gumbel-softmax attention over senses.
//!
//! This crate is `no_std` (it needs `alloc`) and holds the numerical core:
//! vocabulary and window extraction, the sense-attention distributions, the
//! marginalized skip-gram objective with hand-derived gradients, duplicate
//! sense pruning, and the evaluation metrics. File formats, corpus reading,
//! multi-threaded training and the command line live in the `senseforge`
//! crate.

#![no_std]

extern crate alloc;

pub mod attention;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod math;
pub mod params;
pub mod pruning;
pub mod trainer;

pub use attention::{AttentionMode, AttentionVariant, SenseDistribution};
pub use corpus::{ContextWindow, NegativeTable, Vocabulary};
pub use error::{Error, Result};
pub use params::{ModelParams, ParamStore, SenseMask};
pub use trainer::{GradientBundle, TrainConfig};
