//! Few-shot temporal action recognition and downstream analytics.
//!
//! The pipeline has three stages: prototype classification of per-frame
//! feature vectors smoothed by HMM Viterbi decoding, segment extraction with
//! sequence-level features, and rank statistics relating recognition metrics
//! to instructor competency scores. A seeded synthetic cohort generator plus
//! process-model mining round out the toolkit.

pub mod domain;
pub mod error;
pub mod fewshot;
pub mod harness;
pub mod hmm;
pub mod ingest;
pub mod metrics;
pub mod num;
pub mod procmodel;
pub mod seeds;
pub mod sequence;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use num::Real;

/// Default analysis scalar.
pub type Scalar = f64;

pub type FeatureSequence32 = domain::FeatureSequence<f32>;
pub type FeatureSequence64 = domain::FeatureSequence<f64>;
pub type PrototypeSet32 = fewshot::PrototypeSet<f32>;
pub type PrototypeSet64 = fewshot::PrototypeSet<f64>;
pub type TransitionModel32 = hmm::TransitionModel<f32>;
pub type TransitionModel64 = hmm::TransitionModel<f64>;
