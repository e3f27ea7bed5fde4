//! Ensemble detection of machine-generated Chinese text.
//!
//! A set of base detectors each cast a signed binary vote on a text. The
//! votes are combined by a weighted sum whose weights depend on the kind of
//! text being judged (its [`strategy::Strategy`]), optionally nudged by an
//! external support signal for borderline cases, and thresholded into a
//! final [`Label`].
//!
//! Module map:
//!
//! - [`model`]: samples, labels, datasets, verdicts and their JSONL formats.
//! - [`rules`]: the four pattern-based detectors and phrase mining.
//! - [`freq`]: the token-frequency detector.
//! - [`scores`]: external continuous scores and per-length thresholds.
//! - [`strategy`]: features, clustering, strategy books and weight search.
//! - [`voting`]: weighted voting, the final decision rule and overrides.
//! - [`support`]: support signals from an external judge.
//! - [`augment`]: excerpting and back-translation transforms.
//! - [`eval`]: macro-F1, per-subset reports and reliability.

pub mod augment;
pub mod error;
pub mod eval;
pub mod freq;
mod http;
pub mod model;
pub mod rules;
pub mod scores;
pub mod strategy;
pub mod support;
mod util;
pub mod voting;

pub use error::{Error, ErrorKind, Result};
pub use model::{Dataset, DetectorVerdict, Label, LabelCounts, TextSample};
pub use strategy::{Strategy, StrategyBook};
pub use voting::VoteOutcome;
