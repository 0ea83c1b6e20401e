//! Prompt-injection guard toolkit.
//!
//! The crate covers the full guard lifecycle: corpus handling, trigger-word
//! identification by frequency-rank difference, over-defense test-set
//! construction, a from-scratch hashed n-gram classifier, token-recheck
//! debiasing with synthetic benign retraining, and a three-dimensional
//! evaluation harness (benign / malicious / over-defense accuracy) for both
//! the internal model and external HTTP guard endpoints.

pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod evalharness;
pub mod llmclient;
pub mod mof;
pub mod notinject;
pub mod synth;
pub mod textproc;
pub mod trigger;
pub(crate) mod util;
