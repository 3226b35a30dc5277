//! Delexicalized data-to-text generation for morphologically rich languages.

pub mod corpus;
pub mod da;
pub mod delex;
pub mod error;
pub mod eval;
pub mod generation;
pub mod io;
pub mod lexicalize;
pub mod morph;
pub mod neural;
pub mod ngram;

#[cfg(feature = "testkit")]
pub mod testkit;

pub use error::{Error, Result};
