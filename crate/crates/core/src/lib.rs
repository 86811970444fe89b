//! Count-based word embeddings: co-occurrence counting, correspondence
//! analysis and PMI-family matrix transforms, truncated SVD, similarity
//! evaluation, and extreme-value diagnostics.
//!
//! The pipeline stages map onto the modules:
//!
//! 1. [`corpus`]: tokenize text, build a frequency-thresholded vocabulary.
//! 2. [`cooccur`]: count the sparse symmetric word-context matrix with
//!    distance-weighted windows.
//! 3. [`transform`]: turn counts into the matrix to decompose (TTEST, the
//!    POWER_CA residual family, PMI, PPMI, WPMI, STRATOS).
//! 4. [`factorize`]: truncated SVD and embedding extraction under a chosen
//!    coordinate system and singular-value exponent.
//! 5. [`eval`]: cosine + Spearman scoring against word-similarity datasets.
//! 6. [`diagnostics`]: Tukey fences and inertia/dimension contributions.
//!
//! With the default `parallel` feature the data-parallel inner loops run on
//! rayon; without it the same code paths run sequentially and produce
//! identical output.

pub mod cooccur;
pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod factorize;
pub mod sparse;
pub mod transform;

mod exec;
mod fingerprint;

pub use error::{Error, Result};
