//! Core library of the `protolex` pipeline.
//!
//! Given phonetically transcribed word lists (41-symbol sound-class
//! alphabet) for a language family plus an outgroup, the modules in this
//! crate infer cognate classes, sample phylogenies from their Bayesian
//! posterior, reconstruct a proto-word-list at the family's ancestor, and
//! score the reconstruction against a gold ancestor list.
//!
//! Pipeline order (each stage consumes the previous one's output):
//!
//! 1. [`corpus`] — parse and validate word lists
//! 2. [`align`] — train the PMI scoring model, pairwise alignment
//! 3. [`relate`] — PMI distances and the relatedness test
//! 4. [`cognate`] — cognate clustering via label propagation
//! 5. [`chars`] — binary character matrix construction
//! 6. [`phylo`] — CTMC likelihood and Bayesian MCMC over trees
//! 7. [`asr`] — ancestral state reconstruction, proto-class selection
//! 8. [`msa`] — consistency-based multiple sequence alignment
//! 9. [`recon`] — per-column reconstruction and evaluation

pub mod align;
pub mod asr;
pub mod chars;
pub mod cognate;
pub mod corpus;
pub mod mathx;
pub mod msa;
pub mod phylo;
pub mod recon;
pub mod relate;
pub mod rngx;
pub mod tree;

/// Error type shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("tree error: {0}")]
    Tree(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
