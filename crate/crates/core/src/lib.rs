//! One-shot federated unsupervised domain adaptation on feature-space data.
//!
//! Source clients train bottleneck + head classifiers on their labeled
//! domains and upload the parameters once. The server weights each client
//! by its confidence on the unlabeled target domain (Scaled Entropy
//! Attention), averages the parameters, and fine-tunes the result on
//! multi-source pseudo labels with smoothed soft-label cross-entropy.
//!
//! - [`nn`]: dense networks, losses, momentum SGD with warmup, gradient checks
//! - [`data`]: synthetic domain-shift benchmarks and the feature-file format
//! - [`aggregation`]: prediction entropy, client weighting, parameter averaging
//! - [`mspl`]: pseudo-label generation, smoothing, target adaptation
//! - [`federation`]: the one-shot protocol and its trace
//! - [`harness`]: seeded experiments, ablations, sweeps and reports

pub mod aggregation;
pub mod data;
pub mod error;
pub mod federation;
pub mod harness;
pub mod mspl;
pub mod nn;

pub use error::{FudaError, Result};
