//! The guide under `book/` compiled as doc comments, so `cargo test` runs
//! every Rust snippet in it. One module per chapter keeps failures
//! traceable to their chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/dialogue-acts.md")]
pub mod dialogue_acts {}
#[doc = include_str!("../../../book/src/morphology.md")]
pub mod morphology {}
#[doc = include_str!("../../../book/src/delexicalization.md")]
pub mod delexicalization {}
#[doc = include_str!("../../../book/src/corpus.md")]
pub mod corpus {}
#[doc = include_str!("../../../book/src/ngram.md")]
pub mod ngram {}
#[doc = include_str!("../../../book/src/neural.md")]
pub mod neural {}
#[doc = include_str!("../../../book/src/generation.md")]
pub mod generation {}
#[doc = include_str!("../../../book/src/lexicalization.md")]
pub mod lexicalization {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../book/src/file-formats.md")]
pub mod file_formats {}
