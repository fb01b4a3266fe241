//! Interpretable semantic change detection over ICA axes.
//!
//! Two periods of word embeddings are aligned and decomposed by one joint
//! ICA. Axes are ordered by a tour that balances meaning similarity against
//! each axis's contribution to change detection, then adjacent axes are
//! merged into `k` dimensions weighted by skewness.

pub mod axis_tour;
pub mod corpus_io;
pub mod decomposition;
pub mod interpret;
pub mod linalg;
pub mod merge;
pub mod par;
pub mod pipeline;
pub mod scd_eval;
pub mod synthetic;
