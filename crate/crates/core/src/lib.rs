//! Gender-fairness evaluation of spoofing-detection scores.
//!
//! Parse protocols and scores, fix an EER operating point on a development
//! split, apply it to evaluation groups, and compare groups on five fairness
//! metrics with Holm-corrected two-proportion tests.

pub mod error;
pub mod fairness;
pub mod protocol;
pub mod report;
pub mod scoring;
pub mod simgen;
pub mod stats;

pub use error::{Error, Result};
