//! Corpus refinery for continual pre-training data.
//!
//! The crate covers the whole data-preparation path for a multilingual
//! corpus:
//!
//! - [`io`]: JSONL corpus records, streaming read/write and retention stats
//! - [`normalize`]: whitespace/punctuation normalization and escape repair
//! - [`clean`]: the eight document-quality filters with pluggable scorers
//! - [`dedup`]: MinHash LSH near-duplicate removal over chunked rounds
//! - [`tokenize`]: byte-fallback BPE with merge dropout
//! - [`pack`]: adjacent-example merging, code-switching and window packing
//! - [`mixture`]: learning-rate grid, quadratic and linear surrogate fits,
//!   simplex simulation
//! - [`pipeline`]: stage runners and configuration shared with the CLI
//!
//! Numeric code in [`mixture`] and the LSH analysis in [`dedup`] is generic
//! over the scalar type (anything implementing [`Scalar`]); the aliases at
//! the crate root pin the common `f64` instantiations.

pub mod clean;
pub mod dedup;
mod error;
pub mod io;
pub mod mixture;
pub mod normalize;
pub mod pack;
pub mod pipeline;
mod scalar;
pub mod seed;
pub mod tokenize;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use clean::{FilterConfig, FilterKind, FilterVerdict, LangIdModel, NgramLanguageModel};
pub use dedup::{DuplicateClusters, LshParams, MinHashSignature};
pub use io::{Document, RetentionReport, StageStats};
pub use normalize::NormalizeConfig;
pub use pack::{BilingualLexicon, PackConfig, PackMode, PackedWindow};
pub use tokenize::{BpeModel, SegmentationOptions};

/// Quadratic magic-metric fit in double precision.
pub type QuadraticFit = mixture::QuadraticFit<f64>;
/// Linear mixture surrogate in double precision.
pub type SurrogateModel = mixture::SurrogateModel<f64>;
/// Acceptable magic-metric region in double precision.
pub type BoundaryReport = mixture::BoundaryReport<f64>;
/// Simulation result in double precision.
pub type SimulationResult = mixture::SimulationResult<f64>;
/// Single-precision quadratic fit.
pub type QuadraticFit32 = mixture::QuadraticFit<f32>;
/// Single-precision linear surrogate.
pub type SurrogateModel32 = mixture::SurrogateModel<f32>;
