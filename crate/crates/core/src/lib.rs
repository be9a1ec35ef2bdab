//! Per-flow TCP feature extraction, correlation-based feature ranking and
//! classifier-in-the-loop feature selection for benign/malware traffic.
//!
//! The pipeline is:
//!
//! 1. [`capture`] reads pcap/pcapng files into [`capture::RawPacket`]s.
//! 2. [`flow`] assembles bidirectional TCP flows.
//! 3. [`features`] computes the sixteen per-flow features `F1..F16`.
//! 4. [`dataset`] stores labelled feature matrices and fold plans.
//! 5. [`stats`] and [`ranking`] score features against the class label
//!    (crRelevance and four baseline statistics) and against each other (NMRS).
//! 6. [`classify`] provides the decision tree, random forest, bagging and
//!    Gaussian naive Bayes classifiers plus cross-validation.
//! 7. [`selection`] runs the NMRS-ordered elimination loop.
//!
//! [`cli`] wires all of it to the `corrnet` binary.

pub mod capture;
pub mod classify;
pub mod cli;
pub mod dataset;
pub mod features;
pub mod flow;
pub mod ranking;
pub mod seed;
pub mod selection;
pub mod stats;

pub use dataset::{ClassLabel, FeatureMatrix, FoldPlan};
pub use features::{FeatureId, FeatureValues, FeatureVector};
