//! Core library for analyzing chain-of-thought reasoning traces.
//!
//! The crate is organized around a single corpus row type ([`corpus::TraceRecord`])
//! and the operations the experiment flows need:
//!
//! - [`corpus`] — JSONL trace corpora and SFT / question-free training views.
//! - [`patterns`] — Short/Long CoT classification, boundary splitting, and the
//!   four-way reflective-behavior rule engine.
//! - [`answers`] — `\boxed{}` answer extraction and answer equivalence.
//! - [`metrics`] — solvability, RAK adaptability, AES, pass@1, token stats.
//! - [`transforms`] — dataset variants: question nullification, alpha-mixing,
//!   noise levels, difficulty splits, shortest-correct selection, preference
//!   pairs, and low-resource subsampling.
//! - [`toylm`] — a deterministic add-k backoff n-gram model plus a synthetic
//!   arithmetic grammar for desk-scale fine-tuning experiments.
//! - [`inference`] — OpenAI-compatible sampling client with caching and replay.
//! - [`report`] — CSV metric reports and plot-ready data series.
//!
//! Numeric code is generic over the scalar type via [`scalar::Scalar`]; the
//! aliases below pin the default precision used by the CLI and tests.

pub mod answers;
pub mod corpus;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod patterns;
pub mod report;
pub mod scalar;
pub mod toylm;
pub mod transforms;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar for all floating-point computation.
pub type Real = f64;

/// RAK result at default precision.
pub type RakResult = metrics::RakResult<Real>;
/// AES configuration at default precision.
pub type AesConfig = metrics::AesConfig<Real>;
/// AES result at default precision.
pub type AesResult = metrics::AesResult<Real>;
/// Accuracy report at default precision.
pub type AccuracyReport = metrics::AccuracyReport<Real>;
/// Token statistics at default precision.
pub type TokenStats = metrics::TokenStats<Real>;
/// Backoff n-gram model at default precision.
pub type NGramModel = toylm::NGramModel<Real>;
/// Sampling configuration at default precision.
pub type SampleConfig = toylm::SampleConfig<Real>;
/// Override-experiment curve at default precision.
pub type OverrideCurve = toylm::OverrideCurve<Real>;
