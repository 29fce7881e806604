//! Deauville score prediction from PET/CT-style reports: rule-based label
//! extraction and redaction, report normalization and subword encoding,
//! masked-language-model domain adaptation of small transformer encoders,
//! text/vision/multimodal classifiers and Monte Carlo cross-validation.

pub mod classifiers;
pub mod corpus;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod extraction;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
mod util;

pub use error::{Error, Result};
pub use util::read_toml;
