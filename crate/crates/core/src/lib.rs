//! Recurrent image annotation: an LSTM decoder that turns a precomputed image
//! feature vector into a variable-length, STOP-terminated sequence of tags.
//!
//! The pipeline is [`data`] (features, tag sets, synthetic corpora) →
//! [`ordering`] (tag set to training sequence) → [`training`] (BPTT with Adam)
//! → [`inference`] (greedy decoding) → [`eval`] (per-class metrics). The
//! [`cli`] module wires these into the `ria` binary.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod inference;
pub mod io;
pub mod model;
pub mod numerics;
pub mod ordering;
pub mod training;

pub use error::{Error, Result};
