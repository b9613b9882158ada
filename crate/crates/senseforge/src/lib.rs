//! File formats, corpus reading, multi-threaded training and the
//! `senseforge` command line, on top of [`senseforge_core`].

pub mod corpus_file;
pub mod datasets;
pub mod error;
pub mod hogwild;
pub mod modelio;
pub mod progress;
pub mod tasks;

#[doc(hidden)]
pub mod cli;

pub use error::{Error, Result};
pub use senseforge_core as core;
