//! Speaker-verification back-end toolkit: synthetic data, embedding
//! training objectives, PLDA and NPLDA scoring, score normalization and
//! evaluation.

pub mod backend;
pub mod domain;
pub mod error;
pub mod eval;
pub mod extractor;
pub(crate) mod linalg;
pub mod nplda;
pub mod norm;
pub mod synthgen;

pub use error::{Error, Result};
